#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxshap/grid.hpp"

namespace voxshap {

// Sliding-window layout over a crop. Origins are patch min corners sorted
// lexicographically by (x, y, z); the last origin per axis is pulled back so
// the patch ends at the crop boundary.
struct PatchGrid {
  Dims dims;
  Index3 patch_size;
  Index3 step;
  std::vector<Index3> origins;

  BBox box(std::size_t i) const {
    const auto& o = origins[i];
    return {o, {o.x + patch_size.x - 1, o.y + patch_size.y - 1, o.z + patch_size.z - 1}};
  }
  std::size_t patch_voxels() const {
    return static_cast<std::size_t>(patch_size.x * patch_size.y * patch_size.z);
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

// Per-axis origins for one axis: 0, step, 2*step, ... with the final origin
// clamped to dim - patch.
std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t patch, std::int64_t step);

// patch_size is clamped to the crop per axis; step = max(1, floor(p * (1 - overlap))).
PatchGrid build_patch_grid(const Dims& dims, const Index3& patch_size, double overlap = 0.5);

// Separable Gaussian importance map, x-fastest over the patch.
struct PatchWeights {
  Index3 size;
  std::vector<double> values;
};

// Centre at (p - 1) / 2, sigma = sigma_scale * p per axis, unit peak, floored
// at 1e-6.
PatchWeights gaussian_weight_patch(const Index3& patch_size, double sigma_scale = 0.125);

// Voxel-wise logits, class-major: data[c * n + i] with i the x-fastest index.
struct LogitVolume {
  Dims dims;
  Spacing spacing;
  int num_classes = 0;
  std::vector<float> data;

  std::span<const float> channel(int c) const {
    const auto n = dims.count();
    return {data.data() + static_cast<std::size_t>(c) * n, n};
  }
  float at(int c, std::size_t i) const { return data[static_cast<std::size_t>(c) * dims.count() + i]; }

  friend bool operator==(const LogitVolume&, const LogitVolume&) = default;
};

// Patch-level segmentation model. predict() receives x-fastest intensities
// of the given shape (single channel) and returns class-major logits of
// num_classes() * shape voxels. Implementations must be deterministic.
class PatchPredictor {
 public:
  virtual ~PatchPredictor() = default;

  virtual int num_classes() const = 0;
  virtual int num_channels() const { return 1; }
  // Fixed input shape, or nullopt when any shape is accepted.
  virtual std::optional<Index3> patch_size() const { return std::nullopt; }
  // Whether predict() may be called from several threads at once.
  virtual bool supports_concurrency() const = 0;
  // Stable description; part of the cache key.
  virtual std::string identity() const = 0;

  virtual std::vector<float> predict(std::span<const float> patch, const Index3& shape) = 0;
};

// Analytic stand-in for a trained network:
//   logit_c(x) = slope_c * mean3(X around x) + bias_c
// where mean3 averages the 3x3x3 neighbourhood restricted to the patch.
class SyntheticPredictor final : public PatchPredictor {
 public:
  SyntheticPredictor(std::vector<double> slope, std::vector<double> bias);

  // Two classes; foreground when the local mean exceeds threshold_hu.
  static SyntheticPredictor threshold(double threshold_hu, double gain = 0.01);

  int num_classes() const override { return static_cast<int>(slope_.size()); }
  bool supports_concurrency() const override { return true; }
  std::string identity() const override;
  std::vector<float> predict(std::span<const float> patch, const Index3& shape) override;

  const std::vector<double>& slope() const { return slope_; }
  const std::vector<double>& bias() const { return bias_; }

 private:
  std::vector<double> slope_;
  std::vector<double> bias_;
};

// Copies the patch at `origin` of the given shape out of the crop.
std::vector<float> extract_patch(const Volume& crop, const Index3& origin, const Index3& shape);

// Calls the predictor on one patch, validating the output length and
// attaching the origin to any failure.
std::vector<float> predict_patch(PatchPredictor& pred, const Volume& crop, const Index3& origin,
                                 const Index3& shape);

// Gaussian-weighted accumulation of patch logits in 64-bit, normalized at
// the end. Patches must be added in a fixed order for bitwise
// reproducibility.
class PatchFusion {
 public:
  PatchFusion(const Dims& dims, int num_classes, const PatchWeights& weights);

  void add(const Index3& origin, std::span<const float> patch_logits);
  LogitVolume finish(const Spacing& spacing) const;

 private:
  Dims dims_;
  int num_classes_;
  const PatchWeights& weights_;
  std::vector<double> numerator_;
  std::vector<double> denominator_;
};

// workers > 1 predicts patches concurrently when the predictor allows it;
// fusion always runs in grid order.
LogitVolume sliding_window_predict(const Volume& crop, const PatchGrid& grid, PatchPredictor& pred,
                                   const PatchWeights& weights, int workers = 1);

// 1 where argmax_c logits == t (ties resolve to the lowest class index).
Mask hard_prediction(const LogitVolume& logits, int t);

}  // namespace voxshap
