#pragma once

// Synthetic CT-like phantom: an ellipsoidal body split into Voronoi organs
// around seeded sites, air outside, and a spherical ROI at the centre.

#include <cstdint>

#include "voxshap/grid.hpp"

namespace voxshap {

struct PhantomSpec {
  Dims dims{16, 16, 16};
  Spacing spacing{1.0, 1.0, 1.0};
  std::size_t organs = 3;
  double body_fraction = 0.95;  // ellipsoid semi-axes relative to half the extent
  double roi_radius = 3.0;      // voxels
  double noise_hu = 10.0;
  std::uint64_t seed = 0;
};

struct Phantom {
  Volume volume;
  LabelVolume labels;
  Mask roi;
};

// Organ k has mean intensity spread evenly over [-200, 200] HU; every label
// 1..organs is present. Deterministic in the spec.
Phantom make_phantom(const PhantomSpec& spec);

}  // namespace voxshap
