#include "voxshap/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace voxshap {
namespace {

void check_length(std::size_t units, const Coalition& m) {
  if (m.size() != units) {
    throw ValidationError("coalition length " + std::to_string(m.size()) +
                          " does not match num_units " + std::to_string(units));
  }
}

void check_baseline(MaskingBaseline b) {
  if (!std::isfinite(b.value_hu)) throw ValidationError("masking baseline must be finite");
}

}  // namespace

std::size_t Coalition::kept() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

Coalition Coalition::complement() const {
  Coalition c{keep};
  for (auto& b : c.keep) b = b ? 0 : 1;
  return c;
}

Mask perturbation_mask(const UnitMap& units, const Coalition& m) {
  check_length(units.num_units, m);
  Mask out(units.dims, units.spacing, std::uint8_t{0});
  for (std::size_t i = 0; i < units.ids.size(); ++i) {
    const auto id = units.ids[i];
    if (id != 0 && m.keep[id - 1] == 0) out[i] = 1;
  }
  return out;
}

Volume apply_coalition(const Volume& crop, const UnitMap& units, const Coalition& m,
                       MaskingBaseline b) {
  check_length(units.num_units, m);
  check_baseline(b);
  if (!crop.same_grid(units.dims, units.spacing)) {
    throw ValidationError("crop " + to_string(crop.dims()) + " and unit map " +
                          to_string(units.dims) + " differ");
  }
  Volume out = crop;
  for (std::size_t i = 0; i < units.ids.size(); ++i) {
    const auto id = units.ids[i];
    if (id != 0 && m.keep[id - 1] == 0) out[i] = b.value_hu;
  }
  return out;
}

Mask perturbation_mask(const Dims& dims, const Spacing& spacing,
                       const std::vector<std::vector<std::size_t>>& voxels, const Coalition& m) {
  check_length(voxels.size(), m);
  Mask out(dims, spacing, std::uint8_t{0});
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    if (m.keep[j]) continue;
    for (auto i : voxels[j]) out[i] = 1;
  }
  return out;
}

Volume apply_coalition(const Volume& crop, const std::vector<std::vector<std::size_t>>& voxels,
                       const Coalition& m, MaskingBaseline b) {
  check_length(voxels.size(), m);
  check_baseline(b);
  Volume out = crop;
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    if (m.keep[j]) continue;
    for (auto i : voxels[j]) out[i] = b.value_hu;
  }
  return out;
}

}  // namespace voxshap
