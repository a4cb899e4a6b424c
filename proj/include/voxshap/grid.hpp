#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxshap/error.hpp"

namespace voxshap {

// Integer voxel coordinate / extent triple.
struct Index3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  std::int64_t& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  std::int64_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }

  friend auto operator<=>(const Index3&, const Index3&) = default;
};

std::string to_string(const Index3& v);

// Grid extent. Linear index is x-fastest: i = x + nx * (y + ny * z).
struct Dims {
  std::int64_t nx = 1;
  std::int64_t ny = 1;
  std::int64_t nz = 1;

  std::int64_t operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  std::size_t count() const { return static_cast<std::size_t>(nx * ny * nz); }

  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return static_cast<std::size_t>(x + nx * (y + ny * z));
  }
  std::size_t index(const Index3& p) const { return index(p.x, p.y, p.z); }

  Index3 coord(std::size_t i) const {
    const auto li = static_cast<std::int64_t>(i);
    return {li % nx, (li / nx) % ny, li / (nx * ny)};
  }

  bool contains(const Index3& p) const {
    return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < nx && p.y < ny && p.z < nz;
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

// Physical voxel pitch in millimetres.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

// Dense 3D raster on a regular grid. Immutable by convention once handed to
// the engine; mutable access exists for construction.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), data_(checked_count(dims), fill) {
    check_spacing(spacing);
  }
  Raster(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    check_spacing(spacing);
    if (data_.size() != checked_count(dims)) {
      throw ValidationError("raster data length " + std::to_string(data_.size()) +
                            " does not match dims " + to_string(dims));
    }
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  std::vector<T>& storage() { return data_; }

  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[dims_.index(x, y, z)];
  }
  T& at(std::int64_t x, std::int64_t y, std::int64_t z) { return data_[dims_.index(x, y, z)]; }
  const T& at(const Index3& p) const { return data_[dims_.index(p)]; }
  T& at(const Index3& p) { return data_[dims_.index(p)]; }

  bool same_grid(const Dims& d, const Spacing& s) const { return dims_ == d && spacing_ == s; }
  template <typename U>
  bool same_grid(const Raster<U>& other) const {
    return same_grid(other.dims(), other.spacing());
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_count(const Dims& d) {
    if (d.nx < 1 || d.ny < 1 || d.nz < 1) {
      throw ValidationError("raster dims must be >= 1, got " + to_string(d));
    }
    return d.count();
  }
  static void check_spacing(const Spacing& s) {
    if (!(s.x > 0.0) || !(s.y > 0.0) || !(s.z > 0.0)) {
      throw ValidationError("raster spacing must be > 0");
    }
  }

  Dims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

using Volume = Raster<float>;               // CT intensities in HU
using LabelVolume = Raster<std::uint16_t>;  // organ labels, 0 = background
using Mask = Raster<std::uint8_t>;          // binary 0/1

// Number of set voxels.
std::size_t count_set(const Mask& m);

// Inclusive axis-aligned voxel box.
struct BBox {
  Index3 min;
  Index3 max;

  Index3 extent() const { return {max.x - min.x + 1, max.y - min.y + 1, max.z - min.z + 1}; }
  Dims dims() const {
    const auto e = extent();
    return {e.x, e.y, e.z};
  }
  bool contains(const Index3& p) const {
    return p.x >= min.x && p.y >= min.y && p.z >= min.z && p.x <= max.x && p.y <= max.y &&
           p.z <= max.z;
  }
  bool contains(const BBox& b) const { return contains(b.min) && contains(b.max); }
  bool valid() const { return min.x <= max.x && min.y <= max.y && min.z <= max.z; }
  bool within(const Dims& d) const { return valid() && d.contains(min) && d.contains(max); }

  static BBox full(const Dims& d) { return {{0, 0, 0}, {d.nx - 1, d.ny - 1, d.nz - 1}}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

std::string to_string(const BBox& b);

// Smallest box containing every set voxel of the mask.
BBox tight_bbox(const Mask& roi);

struct CubicBox {
  BBox box;
  // Set when a cube side exceeds some volume dimension and that axis had to
  // be clamped to the full extent.
  bool non_cubic = false;
};

// Minimal axis-aligned cube enclosing the ROI. Each axis is grown
// symmetrically around the tight box to the largest tight extent; overflow
// past a volume boundary is shifted to the opposite side.
CubicBox cubic_bbox(const Mask& roi);

// Dilates b by ceil(patch/2) voxels per axis on each side, clamped to dims.
BBox rf_support(const BBox& b, const Index3& patch_size, const Dims& dims);

template <typename T>
Raster<T> crop(const Raster<T>& src, const BBox& b) {
  if (!b.within(src.dims())) {
    throw ValidationError("crop box " + to_string(b) + " outside volume " +
                          to_string(src.dims()));
  }
  Raster<T> out(b.dims(), src.spacing());
  const auto e = b.extent();
  for (std::int64_t z = 0; z < e.z; ++z) {
    for (std::int64_t y = 0; y < e.y; ++y) {
      const T* row = &src.at(b.min.x, b.min.y + y, b.min.z + z);
      T* dst = &out.at(0, y, z);
      std::copy(row, row + e.x, dst);
    }
  }
  return out;
}

// Writes `patch` into `dst` with patch voxel (0,0,0) landing at `origin`.
template <typename T>
void embed(Raster<T>& dst, const Raster<T>& patch, const Index3& origin) {
  const auto& pd = patch.dims();
  const BBox b{origin, {origin.x + pd.nx - 1, origin.y + pd.ny - 1, origin.z + pd.nz - 1}};
  if (!b.within(dst.dims())) {
    throw ValidationError("embed box " + to_string(b) + " outside volume " +
                          to_string(dst.dims()));
  }
  for (std::int64_t z = 0; z < pd.nz; ++z) {
    for (std::int64_t y = 0; y < pd.ny; ++y) {
      const T* row = &patch.at(0, y, z);
      std::copy(row, row + pd.nx, &dst.at(origin.x, origin.y + y, origin.z + z));
    }
  }
}

}  // namespace voxshap
