#include "voxshap/pipeline.hpp"

#include "voxshap/error.hpp"

namespace voxshap {

CropRegion crop_region(const Mask& roi, const Index3& patch_size) {
  CropRegion r;
  r.roi_cube = cubic_bbox(roi);
  r.rf_box = rf_support(r.roi_cube.box, patch_size, roi.dims());
  return r;
}

CroppedInputs crop_inputs(const Volume& volume, const LabelVolume& labels, const Mask& roi,
                          const Index3& patch_size) {
  if (!volume.same_grid(labels) || !volume.same_grid(roi)) {
    throw ValidationError("volume, labels and ROI must share dims and spacing");
  }
  CroppedInputs out{crop_region(roi, patch_size), {}, {}, {}};
  out.volume = crop(volume, out.region.rf_box);
  out.labels = crop(labels, out.region.rf_box);
  out.roi = crop(roi, out.region.rf_box);
  return out;
}

UnitMap make_units(const CroppedInputs& in, const PartitionConfig& cfg) {
  switch (cfg.kind) {
    case UnitKind::Organs:
      return partition_full_organs(in.labels);
    case UnitKind::Fcc:
      return partition_fcc(in.volume.dims(), in.volume.spacing(), cfg.fcc);
    case UnitKind::Hybrid:
      return partition_hybrid(partition_fcc(in.volume.dims(), in.volume.spacing(), cfg.fcc), in.labels,
                              cfg.hybrid);
  }
  throw ValidationError("unknown unit kind");
}

ExplainSession::ExplainSession(Volume crop, Mask roi, UnitMap units, PatchPredictor& predictor,
                               const InferenceConfig& cfg, int target_class, int workers)
    : crop_(std::move(crop)),
      roi_(std::move(roi)),
      units_(std::move(units)),
      counter_(predictor),
      cfg_(cfg),
      target_class_(target_class) {
  if (!crop_.same_grid(roi_)) throw ValidationError("ROI does not match the crop grid");
  if (!(units_.dims == crop_.dims())) {
    throw ValidationError("unit map dims " + to_string(units_.dims) + " do not match crop " +
                          to_string(crop_.dims()));
  }
  units_.validate();
  if (units_.num_units < 1) throw ValidationError("unit map has no units");
  voxels_ = unit_voxels(units_);
  grid_ = build_patch_grid(crop_.dims(), cfg_.patch_size, cfg_.overlap);
  weights_ = gaussian_weight_patch(grid_.patch_size, cfg_.sigma_scale);
  baseline_.emplace(build_cache(crop_, grid_, counter_, weights_, workers));
  context_.emplace(make_baseline_context(baseline_->logits, roi_, target_class_));
}

CachedPrediction ExplainSession::predict(const Coalition& m, int workers) {
  if (m.size() != units_.num_units) {
    throw ValidationError("coalition has " + std::to_string(m.size()) + " entries, expected " +
                          std::to_string(units_.num_units));
  }
  const Mask pmask = perturbation_mask(crop_.dims(), crop_.spacing(), voxels_, m);
  const Volume perturbed = apply_coalition(crop_, voxels_, m, cfg_.baseline);
  CachedPrediction out = [&] {
    if (counter_.supports_concurrency()) {
      return cached_predict(perturbed, pmask, baseline_->cache, counter_, weights_, workers, cfg_.intersection);
    }
    std::lock_guard lock(predict_mu_);
    return cached_predict(perturbed, pmask, baseline_->cache, counter_, weights_, 1, cfg_.intersection);
  }();
  std::lock_guard lock(stats_mu_);
  totals_.add(out.stats);
  return out;
}

double ExplainSession::value(const Coalition& m, const ScoreConfig& score) {
  if (score.target_class != target_class_) {
    throw ValidationError("score target class " + std::to_string(score.target_class) +
                          " differs from the session's " + std::to_string(target_class_));
  }
  return evaluate_score(predict(m).logits, *context_, score);
}

ValueFunction ExplainSession::value_function(const ScoreConfig& score) {
  return [this, score](const Coalition& m) { return value(m, score); };
}

CacheTotals ExplainSession::totals() const {
  std::lock_guard lock(stats_mu_);
  return totals_;
}

void ExplainSession::reset_totals() {
  std::lock_guard lock(stats_mu_);
  totals_ = {};
}

Volume attribution_raster(const UnitMap& units, const std::vector<double>& phi, const Dims& full_dims,
                          const Spacing& spacing, const Index3& crop_origin) {
  if (phi.size() != units.num_units) {
    throw ValidationError("attribution has " + std::to_string(phi.size()) + " values for " +
                          std::to_string(units.num_units) + " units");
  }
  Volume local(units.dims, spacing, 0.0f);
  for (std::size_t i = 0; i < units.ids.size(); ++i) {
    const auto id = units.ids[i];
    if (id > 0) local[i] = static_cast<float>(phi[id - 1]);
  }
  Volume full(full_dims, spacing, 0.0f);
  embed(full, local, crop_origin);
  return full;
}

}  // namespace voxshap
