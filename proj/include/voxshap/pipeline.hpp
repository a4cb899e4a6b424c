#pragma once

// End-to-end wiring: ROI cube, receptive-field crop, unit partition, cached
// inference and the coalition value function.

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>

#include "voxshap/cache.hpp"
#include "voxshap/grid.hpp"
#include "voxshap/infer.hpp"
#include "voxshap/perturb.hpp"
#include "voxshap/score.hpp"
#include "voxshap/shap.hpp"
#include "voxshap/units.hpp"

namespace voxshap {

struct CropRegion {
  CubicBox roi_cube;
  BBox rf_box;  // receptive-field support, in full-volume voxels
};

// ROI cube dilated by half a patch, clamped to the volume.
CropRegion crop_region(const Mask& roi, const Index3& patch_size);

struct CroppedInputs {
  CropRegion region;
  Volume volume;
  LabelVolume labels;
  Mask roi;
};

CroppedInputs crop_inputs(const Volume& volume, const LabelVolume& labels, const Mask& roi,
                          const Index3& patch_size);

struct PartitionConfig {
  UnitKind kind = UnitKind::Organs;
  FccConfig fcc;
  HybridOptions hybrid;
};

UnitMap make_units(const CroppedInputs& in, const PartitionConfig& cfg);

// Forwards to another predictor and counts calls.
class CountingPredictor final : public PatchPredictor {
 public:
  explicit CountingPredictor(PatchPredictor& inner) : inner_(inner) {}

  int num_classes() const override { return inner_.num_classes(); }
  int num_channels() const override { return inner_.num_channels(); }
  std::optional<Index3> patch_size() const override { return inner_.patch_size(); }
  bool supports_concurrency() const override { return inner_.supports_concurrency(); }
  std::string identity() const override { return inner_.identity(); }
  std::vector<float> predict(std::span<const float> patch, const Index3& shape) override {
    ++calls_;
    return inner_.predict(patch, shape);
  }

  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  PatchPredictor& inner_;
  std::atomic<std::size_t> calls_{0};
};

struct InferenceConfig {
  Index3 patch_size{8, 8, 8};
  double overlap = 0.5;
  double sigma_scale = 0.125;
  MaskingBaseline baseline;
  IntersectionTest intersection = IntersectionTest::SummedArea;
};

// Owns the crop, unit map, baseline cache and scoring context for one
// explanation. value() may be called concurrently; calls are serialized
// when the predictor does not support concurrency.
class ExplainSession {
 public:
  ExplainSession(Volume crop, Mask roi, UnitMap units, PatchPredictor& predictor,
                 const InferenceConfig& cfg, int target_class, int workers = 1);

  std::size_t num_units() const { return units_.num_units; }
  const UnitMap& units() const { return units_; }
  const Volume& crop() const { return crop_; }
  const PatchGrid& grid() const { return grid_; }
  const PatchLogitCache& cache() const { return baseline_->cache; }
  const LogitVolume& baseline_logits() const { return baseline_->logits; }
  const BaselineContext& context() const { return *context_; }
  int target_class() const { return target_class_; }

  // Perturbed-crop logits for a coalition, with hit/miss accounting.
  CachedPrediction predict(const Coalition& m, int workers = 1);
  double value(const Coalition& m, const ScoreConfig& score);
  ValueFunction value_function(const ScoreConfig& score);

  // Baseline calls plus every miss so far.
  std::size_t predictor_calls() const { return counter_.calls(); }
  CacheTotals totals() const;
  void reset_totals();

 private:
  Volume crop_;
  Mask roi_;
  UnitMap units_;
  std::vector<std::vector<std::size_t>> voxels_;
  CountingPredictor counter_;
  InferenceConfig cfg_;
  int target_class_;
  PatchGrid grid_;
  PatchWeights weights_;
  std::optional<BaselineInference> baseline_;
  std::optional<BaselineContext> context_;
  mutable std::mutex stats_mu_;
  std::mutex predict_mu_;
  CacheTotals totals_;
};

// Per-voxel attribution on the full volume grid: every voxel of unit j takes
// phi[j - 1]; unit 0 and voxels outside the crop are 0.
Volume attribution_raster(const UnitMap& units, const std::vector<double>& phi, const Dims& full_dims,
                          const Spacing& spacing, const Index3& crop_origin);

}  // namespace voxshap
