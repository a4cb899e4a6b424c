#pragma once

#include <cstdint>
#include <vector>

#include "voxshap/grid.hpp"
#include "voxshap/units.hpp"

namespace voxshap {

// keep[j] == 1 keeps unit j+1, 0 removes it.
struct Coalition {
  std::vector<std::uint8_t> keep;

  static Coalition all(std::size_t m) { return {std::vector<std::uint8_t>(m, 1)}; }
  static Coalition none(std::size_t m) { return {std::vector<std::uint8_t>(m, 0)}; }

  std::size_t size() const { return keep.size(); }
  std::size_t kept() const;
  Coalition complement() const;

  friend auto operator<=>(const Coalition&, const Coalition&) = default;
};

// Masking value for removed units, air-equivalent by default.
struct MaskingBaseline {
  float value_hu = -1024.0f;
};

// Voxels of removed units. Unit-0 voxels are never set.
Mask perturbation_mask(const UnitMap& units, const Coalition& m);

// Returns the crop with every removed unit's voxels replaced by the baseline.
Volume apply_coalition(const Volume& crop, const UnitMap& units, const Coalition& m,
                       MaskingBaseline b = {});

// Same operations driven by precomputed per-unit voxel lists
// (see unit_voxels); used on the hot path.
Mask perturbation_mask(const Dims& dims, const Spacing& spacing,
                       const std::vector<std::vector<std::size_t>>& voxels, const Coalition& m);
Volume apply_coalition(const Volume& crop, const std::vector<std::vector<std::size_t>>& voxels,
                       const Coalition& m, MaskingBaseline b = {});

}  // namespace voxshap
