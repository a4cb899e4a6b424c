#include "voxshap/score.hpp"

namespace voxshap {
namespace {

void check_inputs(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx) {
  if (z_t.size() != ctx.p0().size() || !(pm.dims() == ctx.p0().dims())) {
    throw ValidationError("score inputs do not share the crop grid");
  }
}

}  // namespace

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::TP: return "tp";
    case ScoreKind::FP: return "fp";
    case ScoreKind::Dice: return "dice";
    case ScoreKind::SoftDice: return "softdice";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& s) {
  if (s == "tp") return ScoreKind::TP;
  if (s == "fp") return ScoreKind::FP;
  if (s == "dice") return ScoreKind::Dice;
  if (s == "softdice") return ScoreKind::SoftDice;
  throw ValidationError("unknown score kind '" + s + "' (expected tp|fp|dice|softdice)");
}

BaselineContext::BaselineContext(Mask p0, Mask roi) : p0_(std::move(p0)), roi_(std::move(roi)) {
  if (!(p0_.dims() == roi_.dims())) throw ValidationError("baseline prediction and ROI grids differ");
  for (std::size_t i = 0; i < roi_.size(); ++i) {
    if (roi_[i]) {
      roi_index_.push_back(i);
      if (p0_[i]) ++p0_in_roi_;
    }
  }
  if (roi_index_.empty()) throw ValidationError("empty ROI");
}

BaselineContext make_baseline_context(const LogitVolume& baseline, const Mask& roi, int target_class) {
  return BaselineContext(hard_prediction(baseline, target_class), roi);
}

double s_tp(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx) {
  check_inputs(z_t, pm, ctx);
  double sum = 0.0;
  for (auto i : ctx.roi_voxels()) {
    if (pm[i] && ctx.p0()[i]) sum += z_t[i];
  }
  return sum / static_cast<double>(ctx.roi_size());
}

double s_fp(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx) {
  check_inputs(z_t, pm, ctx);
  double sum = 0.0;
  for (auto i : ctx.roi_voxels()) {
    if (pm[i] && !ctx.p0()[i]) sum += z_t[i];
  }
  return -sum / static_cast<double>(ctx.roi_size());
}

double s_dice(const Mask& pm, const BaselineContext& ctx, double epsilon) {
  if (!(pm.dims() == ctx.p0().dims())) throw ValidationError("score inputs do not share the crop grid");
  if (!(epsilon > 0.0)) throw ValidationError("dice epsilon must be > 0");
  std::size_t inter = 0, pm_count = 0;
  for (auto i : ctx.roi_voxels()) {
    if (pm[i]) {
      ++pm_count;
      if (ctx.p0()[i]) ++inter;
    }
  }
  return 2.0 * static_cast<double>(inter) /
         (static_cast<double>(pm_count) + static_cast<double>(ctx.p0_in_roi()) + epsilon);
}

double s_soft(std::span<const float> z_t, const Mask& pm, const BaselineContext& ctx) {
  check_inputs(z_t, pm, ctx);
  // The w = +1 and w = -1 voxels are accumulated separately, in the same
  // order as s_tp / s_fp, so that s_soft == s_tp + s_fp holds bit-exactly.
  double agree = 0.0, added = 0.0;
  for (auto i : ctx.roi_voxels()) {
    if (!pm[i]) continue;
    if (ctx.p0()[i]) {
      agree += z_t[i];
    } else {
      added += z_t[i];
    }
  }
  const auto r = static_cast<double>(ctx.roi_size());
  return agree / r + -added / r;
}

double evaluate_score(const LogitVolume& logits_m, const BaselineContext& ctx, const ScoreConfig& cfg) {
  const Mask pm = hard_prediction(logits_m, cfg.target_class);
  const auto z_t = logits_m.channel(cfg.target_class);
  switch (cfg.kind) {
    case ScoreKind::TP: return s_tp(z_t, pm, ctx);
    case ScoreKind::FP: return s_fp(z_t, pm, ctx);
    case ScoreKind::Dice: return s_dice(pm, ctx, cfg.epsilon);
    case ScoreKind::SoftDice: return s_soft(z_t, pm, ctx);
  }
  throw ValidationError("unknown score kind");
}

}  // namespace voxshap
