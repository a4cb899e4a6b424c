#pragma once

// KernelSHAP over interpretable units: coalition sampling, the
// efficiency-constrained Shapley-kernel weighted least squares, an exact
// Shapley oracle and convergence diagnostics.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "voxshap/perturb.hpp"

namespace voxshap {

// Shapley kernel (M - 1) / (C(M, k) * k * (M - k)) for 0 < k < M.
double kernel_weight(std::size_t m, std::size_t k);

struct ShapConfig {
  std::size_t budget = 1000;  // unique non-trivial coalitions; v(1), v(0) are extra
  std::uint64_t seed = 0;
  double holdout = 0.1;       // fraction held out for surrogate generalization
  double ridge = 1e-8;        // Tikhonov term on the reduced system
};

struct WeightedCoalition {
  Coalition mask;
  double weight = 0.0;  // normalized so that all weights sum to 1
};

struct CoalitionPlan {
  std::vector<WeightedCoalition> items;
  bool enumerated = false;  // every non-trivial coalition is present
  std::size_t draws = 0;    // raw draws before de-duplication (sampling only)
};

// Full enumeration when 2^M - 2 <= budget; otherwise kernel-distributed
// subset sizes, uniform subsets of that size, paired with complements, with
// duplicate draws folded into the weight. Exactly `budget` unique masks.
CoalitionPlan sample_coalitions(std::size_t m, const ShapConfig& cfg);

// Value of a coalition. Must be safe to call concurrently when used with
// workers > 1.
using ValueFunction = std::function<double(const Coalition&)>;

struct CoalitionSample {
  std::size_t num_units = 0;
  std::vector<Coalition> masks;
  std::vector<double> weights;
  std::vector<double> values;
  double v_full = 0.0;   // v(1)
  double v_empty = 0.0;  // v(0)
  bool enumerated = false;
};

CoalitionSample evaluate_coalitions(const CoalitionPlan& plan, std::size_t m,
                                    const ValueFunction& value, int workers = 1);

struct SolveDiagnostics {
  std::size_t fit_count = 0;
  double residual_max = 0.0;
  double residual_mean = 0.0;
  double residual_p50 = 0.0;
  double residual_p90 = 0.0;
  double cond = 0.0;  // condition number of the weighted reduced design
  std::size_t holdout_count = 0;
  std::optional<double> holdout_mae;
  std::optional<double> holdout_r2;
  int refinement_steps = 0;
};

struct Attribution {
  std::vector<double> phi;  // phi[j] belongs to unit j + 1
  double phi0 = 0.0;        // v(0)
  double v_full = 0.0;      // v(1)
  SolveDiagnostics diagnostics;
};

struct SolveOptions {
  double ridge = 1e-8;
  double holdout = 0.1;
  std::uint64_t seed = 0;
};

// Weighted least squares of v(m) on the mask vectors subject to phi0 = v(0)
// and sum(phi) = v(1) - v(0), solved by eliminating the last unit. The ridge
// term stabilizes the factorization and is then removed by iterated
// refinement, so well-posed systems converge to the unregularized solution.
// The returned attribution is fit on every coalition; the holdout split only
// feeds the generalization diagnostics.
Attribution solve(const CoalitionSample& sample, const SolveOptions& opts = {});

// Exact Shapley values from all 2^M coalitions. Refuses M > 20.
Attribution exact_shapley(const ValueFunction& value, std::size_t m, int workers = 1);
// Same, from a table indexed by bitmask (bit j set keeps unit j + 1).
Attribution exact_shapley_table(const std::vector<double>& values, std::size_t m);

constexpr std::size_t kMaxExactUnits = 20;

struct BudgetReport {
  std::size_t budget = 0;
  bool enumerated = false;
  std::vector<double> phi;
  std::optional<double> l1_change;  // relative to the previous budget
  SolveDiagnostics diagnostics;
};

struct ConvergenceReport {
  std::size_t num_units = 0;
  std::vector<BudgetReport> budgets;
};

// Relative l1 change ||a - b||_1 / (||b||_1 + 1e-12).
double relative_l1(const std::vector<double>& a, const std::vector<double>& b);

// Solves on a fresh seed-derived sample per budget. Coalition values are
// memoized across budgets.
ConvergenceReport convergence_report(const ValueFunction& value, std::size_t m,
                                     const std::vector<std::size_t>& budgets,
                                     const ShapConfig& cfg, int workers = 1);

}  // namespace voxshap
