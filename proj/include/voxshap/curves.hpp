#pragma once

// Deletion curves (MoRF / LeRF) and their area metrics.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "voxshap/perturb.hpp"

namespace voxshap {

enum class Ordering { MoRF, LeRF };

std::string to_string(Ordering o);

// Unit ids (1-based) sorted by descending phi (MoRF) or ascending phi
// (LeRF); equal values keep ascending id order.
std::vector<std::size_t> rank_units(const std::vector<double>& phi, Ordering o);

// Cumulative number of removed units after each step k = 1..K. One unit per
// step while M <= k_max, otherwise k_max batches of floor(M / k_max) with the
// remainder added to the last batch.
std::vector<std::size_t> removal_schedule(std::size_t m, std::size_t k_max = 20);

struct CurveStep {
  std::size_t k = 0;
  std::size_t units_removed = 0;
  double fraction_removed = 0.0;
  double score = 0.0;
};

struct PerturbationCurve {
  Ordering ordering = Ordering::MoRF;
  std::size_t num_units = 0;
  std::vector<CurveStep> steps;  // steps[0] is the unperturbed input

  std::size_t K() const { return steps.empty() ? 0 : steps.size() - 1; }
};

using ScoreFunction = std::function<double(const Coalition&)>;

// Removes units cumulatively in `order` following the schedule and scores
// every step; step 0 keeps all units.
PerturbationCurve deletion_curve(const std::vector<std::size_t>& order, Ordering kind,
                                 const ScoreFunction& score, std::size_t k_max = 20);

// (1/K) sum_{k=1..K} (s(0) - s(k)).
double aopc(const PerturbationCurve& curve);
// (1/K) sum_{k=1..K} (s_lerf(k) - s_morf(k)). Throws on schedule mismatch.
double abpc(const PerturbationCurve& lerf, const PerturbationCurve& morf);

constexpr double kNormalizeEpsilon = 1e-12;

// s~(k) = (s(k) - s_min) / (s_max - s_min + eps).
PerturbationCurve normalize_curve(const PerturbationCurve& curve, double s_max, double s_min,
                                  double eps = kNormalizeEpsilon);

struct CurveMetrics {
  double aopc = 0.0;
  double abpc = 0.0;
  double n_aopc = 0.0;
  double n_abpc = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
  bool degenerate_range = false;  // s_max - s_min does not exceed eps
  bool out_of_range = false;      // some normalized score left [0, 1]
};

// s_max = s(0), s_min = fully perturbed score, both read off the MoRF curve.
CurveMetrics curve_metrics(const PerturbationCurve& morf, const PerturbationCurve& lerf,
                           double eps = kNormalizeEpsilon);

// Rows: ordering,k,units_removed,fraction_removed,score,normalized_score.
std::string curves_csv(const PerturbationCurve& morf, const PerturbationCurve& lerf,
                       const CurveMetrics& metrics, bool header = true);

}  // namespace voxshap
