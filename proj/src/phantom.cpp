#include "voxshap/phantom.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "voxshap/error.hpp"

namespace voxshap {

Phantom make_phantom(const PhantomSpec& spec) {
  if (spec.organs < 1 || spec.organs > 65535) throw ValidationError("phantom needs 1..65535 organs");
  const Dims& d = spec.dims;
  Phantom p{Volume(d, spec.spacing, -1000.0f), LabelVolume(d, spec.spacing, std::uint16_t{0}),
            Mask(d, spec.spacing, std::uint8_t{0})};
  const std::array<double, 3> centre{(d.nx - 1) / 2.0, (d.ny - 1) / 2.0, (d.nz - 1) / 2.0};
  const std::array<double, 3> semi{spec.body_fraction * d.nx / 2.0, spec.body_fraction * d.ny / 2.0,
                                   spec.body_fraction * d.nz / 2.0};
  auto in_body = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    const double a = (x - centre[0]) / semi[0], b = (y - centre[1]) / semi[1], c = (z - centre[2]) / semi[2];
    return a * a + b * b + c * c <= 1.0;
  };

  std::vector<std::size_t> body;
  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto q = d.coord(i);
    if (in_body(q.x, q.y, q.z)) body.push_back(i);
  }
  if (body.size() < spec.organs) throw ValidationError("phantom body too small for the organ count");

  // Distinct body voxels as sites, so each organ owns at least its site.
  std::mt19937_64 rng(spec.seed);
  std::vector<Index3> sites;
  std::vector<std::size_t> pool = body;
  for (std::size_t k = 0; k < spec.organs; ++k) {
    const auto j = k + static_cast<std::size_t>(rng() % (pool.size() - k));
    std::swap(pool[k], pool[j]);
    sites.push_back(d.coord(pool[k]));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto i : body) {
    const auto q = d.coord(i);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sites.size(); ++k) {
      const double dx = (q.x - sites[k].x) * spec.spacing.x, dy = (q.y - sites[k].y) * spec.spacing.y,
                   dz = (q.z - sites[k].z) * spec.spacing.z;
      const double dist = dx * dx + dy * dy + dz * dz;
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    p.labels[i] = static_cast<std::uint16_t>(best + 1);
    const double mean = spec.organs == 1 ? 100.0 : -200.0 + 400.0 * static_cast<double>(best) / (spec.organs - 1);
    p.volume[i] = static_cast<float>(mean + spec.noise_hu * noise(rng));
  }

  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto q = d.coord(i);
    const double dx = q.x - centre[0], dy = q.y - centre[1], dz = q.z - centre[2];
    if (dx * dx + dy * dy + dz * dz <= spec.roi_radius * spec.roi_radius) p.roi[i] = 1;
  }
  return p;
}

}  // namespace voxshap
