#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxshap/grid.hpp"

namespace voxshap {

enum class UnitKind { Organs, Fcc, Hybrid };

std::string to_string(UnitKind k);
UnitKind parse_unit_kind(const std::string& s);

// Voxel -> interpretable unit assignment over a crop. Id 0 means "no unit"
// (excluded background); ids 1..num_units each occur at least once.
struct UnitMap {
  Dims dims;
  Spacing spacing;
  std::vector<std::uint32_t> ids;
  std::uint32_t num_units = 0;
  UnitKind kind = UnitKind::Organs;
  double scale_mm = 0.0;
  std::uint32_t min_fragment = 0;

  // Voxel count per unit, index 0 holds the excluded count.
  std::vector<std::size_t> counts() const;
  // Throws ValidationError unless every id is <= num_units and every id in
  // 1..num_units occurs.
  void validate() const;
  // SHA-256 over dims, num_units and the id payload.
  std::string content_hash() const;

  friend bool operator==(const UnitMap&, const UnitMap&) = default;
};

// Linear voxel indices per unit; entry j-1 lists unit j.
std::vector<std::vector<std::size_t>> unit_voxels(const UnitMap& units);

// One unit per distinct nonzero label, numbered by ascending label.
UnitMap partition_full_organs(const LabelVolume& labels);

struct FccConfig {
  double scale_mm = 20.0;
};

struct FccCenter {
  std::array<double, 3> mm;
  std::array<std::int64_t, 3> cell;
  int offset = 0;  // 0..3, see kFccOffsets
};

// Face-centred cubic lattice of cube pitch S anchored at the crop's min
// corner, restricted to the crop's physical extent padded by S/2. Order:
// cell index (x, y, z) lexicographic, then offset index.
std::vector<FccCenter> fcc_centers(const Dims& dims, const Spacing& spacing, const FccConfig& cfg);

// Physical centre of voxel i along `axis`: (i + 0.5) * spacing.
inline double voxel_center_mm(std::int64_t i, double spacing) {
  return (static_cast<double>(i) + 0.5) * spacing;
}

// Nearest-centre Voronoi tessellation; ties go to the lowest centre index,
// empty cells are dropped and ids renumbered compactly in centre order.
UnitMap partition_fcc(const Dims& dims, const Spacing& spacing, const FccConfig& cfg);

struct HybridOptions {
  // Fragments with fewer voxels merge into the largest face-adjacent unit of
  // the same organ. 0 disables merging.
  std::uint32_t min_fragment_voxels = 0;
};

// Splits every FCC cell by organ label. Background voxels become unit 0.
UnitMap partition_hybrid(const UnitMap& fcc, const LabelVolume& labels,
                         const HybridOptions& opts = {});

// VRAW u16 (u32 when M > 65535) with a "units" sidecar block
// {kind, scale_mm, num_units, min_fragment}.
void write_unit_map(const std::filesystem::path& p, const UnitMap& units,
                    const nlohmann::json& extra = {});
UnitMap read_unit_map(const std::filesystem::path& p);

}  // namespace voxshap
