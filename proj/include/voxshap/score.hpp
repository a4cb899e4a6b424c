#pragma once

#include <string>
#include <vector>

#include "voxshap/grid.hpp"
#include "voxshap/infer.hpp"

namespace voxshap {

enum class ScoreKind { TP, FP, Dice, SoftDice };

std::string to_string(ScoreKind k);
ScoreKind parse_score_kind(const std::string& s);

struct ScoreConfig {
  ScoreKind kind = ScoreKind::TP;
  int target_class = 1;
  double epsilon = 1e-6;  // Dice stabilizer
};

// Baseline prediction P0 and ROI R on the crop grid. All scores are
// normalized by |R| and only look at ROI voxels.
class BaselineContext {
 public:
  BaselineContext(Mask p0, Mask roi);

  const Mask& p0() const { return p0_; }
  const Mask& roi() const { return roi_; }
  std::size_t roi_size() const { return roi_index_.size(); }
  const std::vector<std::size_t>& roi_voxels() const { return roi_index_; }
  // |P0 . R|
  std::size_t p0_in_roi() const { return p0_in_roi_; }

 private:
  Mask p0_;
  Mask roi_;
  std::vector<std::size_t> roi_index_;
  std::size_t p0_in_roi_ = 0;
};

// Builds the context from baseline (all units kept) logits.
BaselineContext make_baseline_context(const LogitVolume& baseline, const Mask& roi, int target_class);

// z_t is the target-class logit channel; pm the perturbed hard prediction.
double s_tp(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx);
double s_fp(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx);
double s_dice(const Mask& pm, const BaselineContext& ctx, double epsilon);
double s_soft(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx);

// Computes P_m from the logits and dispatches on cfg.kind.
double evaluate_score(const LogitVolume& logits_m, const BaselineContext& ctx, const ScoreConfig& cfg);

}  // namespace voxshap
