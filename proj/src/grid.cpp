#include "voxshap/grid.hpp"

#include <algorithm>
#include <limits>

namespace voxshap {

std::string to_string(const Index3& v) {
  return "(" + std::to_string(v.x) + "," + std::to_string(v.y) + "," + std::to_string(v.z) + ")";
}

std::string to_string(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

std::string to_string(const BBox& b) { return "[" + to_string(b.min) + "," + to_string(b.max) + "]"; }

std::size_t count_set(const Mask& m) {
  return static_cast<std::size_t>(
      std::count_if(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v != 0; }));
}

BBox tight_bbox(const Mask& roi) {
  constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
  constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
  BBox b{{kMax, kMax, kMax}, {kMin, kMin, kMin}};
  const auto& d = roi.dims();
  bool any = false;
  for (std::int64_t z = 0; z < d.nz; ++z) {
    for (std::int64_t y = 0; y < d.ny; ++y) {
      for (std::int64_t x = 0; x < d.nx; ++x) {
        if (roi.at(x, y, z) == 0) continue;
        any = true;
        b.min = {std::min(b.min.x, x), std::min(b.min.y, y), std::min(b.min.z, z)};
        b.max = {std::max(b.max.x, x), std::max(b.max.y, y), std::max(b.max.z, z)};
      }
    }
  }
  if (!any) throw ValidationError("empty ROI");
  return b;
}

CubicBox cubic_bbox(const Mask& roi) {
  const BBox tight = tight_bbox(roi);
  const Index3 ext = tight.extent();
  const std::int64_t side = std::max({ext.x, ext.y, ext.z});
  const Dims& d = roi.dims();

  CubicBox out{tight, false};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t dim = d[a];
    if (side > dim) {
      out.box.min[a] = 0;
      out.box.max[a] = dim - 1;
      out.non_cubic = true;
      continue;
    }
    const std::int64_t grow = side - ext[a];
    std::int64_t lo = tight.min[a] - grow / 2;
    std::int64_t hi = tight.max[a] + (grow - grow / 2);
    if (lo < 0) {
      hi += -lo;
      lo = 0;
    }
    if (hi > dim - 1) {
      lo -= hi - (dim - 1);
      hi = dim - 1;
    }
    out.box.min[a] = lo;
    out.box.max[a] = hi;
  }
  return out;
}

BBox rf_support(const BBox& b, const Index3& patch_size, const Dims& dims) {
  if (patch_size.x < 1 || patch_size.y < 1 || patch_size.z < 1) {
    throw ValidationError("patch size components must be >= 1");
  }
  BBox out;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t radius = (patch_size[a] + 1) / 2;
    out.min[a] = std::max<std::int64_t>(0, b.min[a] - radius);
    out.max[a] = std::min<std::int64_t>(dims[a] - 1, b.max[a] + radius);
  }
  return out;
}

}  // namespace voxshap
