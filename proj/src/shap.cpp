#include "voxshap/shap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "voxshap/error.hpp"
#include "voxshap/parallel.hpp"

namespace voxshap {
namespace {

// Portable draws from mt19937_64 (whose output sequence is fully specified),
// so seeded samples do not depend on the standard library's distributions.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const auto r = rng();
    if (r < limit) return r % n;
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double binomial(std::size_t n, std::size_t k) {
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

std::string mask_key(const Coalition& c) { return {c.keep.begin(), c.keep.end()}; }

bool enumeration_fits(std::size_t m, std::size_t budget) {
  if (m >= 63) return false;
  return (std::uint64_t{1} << m) - 2 <= budget;
}

struct ReducedFit {
  std::vector<double> phi;
  double cond = 0.0;
  int steps = 0;
};

std::string describe_rank_deficiency(const std::vector<const Coalition*>& masks, std::size_t m) {
  std::vector<std::size_t> dead;
  std::vector<std::pair<std::size_t, std::size_t>> dup;
  for (std::size_t j = 0; j < m; ++j) {
    bool varies = false;
    for (const auto* c : masks) {
      if (c->keep[j] != masks.front()->keep[j]) {
        varies = true;
        break;
      }
    }
    if (!varies) dead.push_back(j + 1);
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      bool same = true;
      for (const auto* c : masks) {
        if (c->keep[a] != c->keep[b]) {
          same = false;
          break;
        }
      }
      if (same) dup.emplace_back(a + 1, b + 1);
    }
  }
  std::ostringstream os;
  os << "rank-deficient coalition design";
  if (!dead.empty()) {
    os << "; dead features:";
    for (auto j : dead) os << ' ' << j;
  }
  if (!dup.empty()) {
    os << "; duplicate features:";
    for (auto [a, b] : dup) os << " (" << a << "," << b << ")";
  }
  return os.str();
}

// Constrained WLS on the rows `rows` of the sample.
ReducedFit fit_reduced(const CoalitionSample& s, const std::vector<std::size_t>& rows, double ridge) {
  const std::size_t m = s.num_units;
  const double delta = s.v_full - s.v_empty;
  ReducedFit fit;
  if (m == 1) {
    fit.phi = {delta};
    fit.cond = 1.0;
    return fit;
  }
  const auto p = static_cast<Eigen::Index>(m - 1);
  const auto n = static_cast<Eigen::Index>(rows.size());
  std::vector<const Coalition*> used;
  for (auto r : rows) used.push_back(&s.masks[r]);
  if (n < p) throw NumericalError(describe_rank_deficiency(used, m) + " (fewer coalitions than unknowns)");

  Eigen::MatrixXd a(n, p);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    const auto& keep = s.masks[r].keep;
    const double last = keep[m - 1];
    const double sw = std::sqrt(s.weights[r]);
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = sw * (keep[static_cast<std::size_t>(j)] - last);
    b(i) = sw * (s.values[r] - s.v_empty - last * delta);
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  fit.cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(smin > smax * 1e-10)) {
    throw NumericalError(describe_rank_deficiency(used, m) + " (cond=" + std::to_string(fit.cond) + ")");
  }

  Eigen::MatrixXd aug(n + p, p);
  aug.topRows(n) = a;
  aug.bottomRows(p) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(p, p);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(aug);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  rhs.head(n) = b;
  Eigen::VectorXd phi = qr.solve(rhs);
  // Iterated Tikhonov: each correction solves the ridge problem on the
  // current residual; the fixed point satisfies the unregularized normal
  // equations.
  for (int it = 0; it < 100 && ridge > 0.0; ++it) {
    rhs.head(n) = b - a * phi;
    rhs.tail(p).setZero();
    const Eigen::VectorXd step = qr.solve(rhs);
    phi += step;
    fit.steps = it + 1;
    if (step.lpNorm<Eigen::Infinity>() <= 1e-16 * std::max(1.0, phi.lpNorm<Eigen::Infinity>())) break;
  }
  if (!phi.allFinite()) throw NumericalError("non-finite KernelSHAP solution");

  fit.phi.resize(m);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.phi[static_cast<std::size_t>(j)] = phi(j);
    sum += phi(j);
  }
  fit.phi[m - 1] = delta - sum;
  return fit;
}

double surrogate(const std::vector<double>& phi, double phi0, const Coalition& c) {
  double v = phi0;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (c.keep[j]) v += phi[j];
  }
  return v;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double kernel_weight(std::size_t m, std::size_t k) {
  if (k == 0 || k >= m) {
    throw ValidationError("kernel weight undefined for k=" + std::to_string(k) + ", M=" + std::to_string(m));
  }
  const double md = static_cast<double>(m), kd = static_cast<double>(k);
  const double c = binomial(m, k);
  if (std::isfinite(c)) return (md - 1.0) / (c * kd * (md - kd));
  const double log_c = std::lgamma(md + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(md - kd + 1.0);
  return std::exp(std::log(md - 1.0) - log_c - std::log(kd) - std::log(md - kd));
}

CoalitionPlan sample_coalitions(std::size_t m, const ShapConfig& cfg) {
  if (m < 1) throw ValidationError("need at least one unit");
  if (cfg.budget < m + 2) {
    throw ValidationError("budget below identifiability: n=" + std::to_string(cfg.budget) +
                          " < M+2=" + std::to_string(m + 2));
  }
  CoalitionPlan plan;
  if (enumeration_fits(m, cfg.budget)) {
    plan.enumerated = true;
    const std::uint64_t total = std::uint64_t{1} << m;
    double wsum = 0.0;
    for (std::uint64_t bits = 1; bits + 1 < total; ++bits) {
      Coalition c{std::vector<std::uint8_t>(m, 0)};
      for (std::size_t j = 0; j < m; ++j) c.keep[j] = (bits >> j) & 1U;
      const double w = kernel_weight(m, c.kept());
      wsum += w;
      plan.items.push_back({std::move(c), w});
    }
    for (auto& it : plan.items) it.weight /= wsum;
    return plan;
  }

  // Subset-size distribution proportional to the total kernel mass per size.
  std::vector<double> cdf(m - 1);
  double acc = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    acc += (static_cast<double>(m) - 1.0) / (static_cast<double>(k) * static_cast<double>(m - k));
    cdf[k - 1] = acc;
  }
  for (auto& c : cdf) c /= acc;

  std::mt19937_64 rng(cfg.seed);
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> counts;
  std::vector<std::size_t> perm(m);
  auto add = [&](Coalition c) {
    auto [it, inserted] = index.emplace(mask_key(c), plan.items.size());
    if (inserted) {
      plan.items.push_back({std::move(c), 0.0});
      counts.push_back(0.0);
    }
    counts[it->second] += 1.0;
    ++plan.draws;
  };
  while (plan.items.size() < cfg.budget) {
    const double u = uniform01(rng);
    const auto k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Coalition c{std::vector<std::uint8_t>(m, 0)};
    for (std::size_t i = 0; i < std::min(k, m - 1); ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_below(rng, m - i));
      std::swap(perm[i], perm[j]);
      c.keep[perm[i]] = 1;
    }
    Coalition comp = c.complement();
    add(std::move(c));
    if (plan.items.size() < cfg.budget) add(std::move(comp));
  }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (std::size_t i = 0; i < plan.items.size(); ++i) plan.items[i].weight = counts[i] / total;
  return plan;
}

CoalitionSample evaluate_coalitions(const CoalitionPlan& plan, std::size_t m, const ValueFunction& value,
                                    int workers) {
  CoalitionSample s;
  s.num_units = m;
  s.enumerated = plan.enumerated;
  s.masks.reserve(plan.items.size());
  s.weights.reserve(plan.items.size());
  for (const auto& it : plan.items) {
    if (it.mask.size() != m) throw ValidationError("coalition length does not match M");
    s.masks.push_back(it.mask);
    s.weights.push_back(it.weight);
  }
  s.values.assign(s.masks.size(), 0.0);
  try {
    s.v_full = value(Coalition::all(m));
  } catch (...) {
    rethrow_with_context("full coalition: ");
  }
  try {
    s.v_empty = value(Coalition::none(m));
  } catch (...) {
    rethrow_with_context("empty coalition: ");
  }
  parallel_for(s.masks.size(), workers, [&](std::size_t i) {
    try {
      s.values[i] = value(s.masks[i]);
    } catch (...) {
      rethrow_with_context("coalition #" + std::to_string(i) + ": ");
    }
  });
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!std::isfinite(s.values[i])) {
      throw NumericalError("coalition #" + std::to_string(i) + " has a non-finite value");
    }
  }
  return s;
}

Attribution solve(const CoalitionSample& s, const SolveOptions& opts) {
  const std::size_t m = s.num_units;
  if (m == 0) throw ValidationError("solve: no units");
  if (s.masks.size() != s.values.size() || s.masks.size() != s.weights.size()) {
    throw ValidationError("solve: sample arrays differ in length");
  }
  if (!(opts.holdout >= 0.0 && opts.holdout < 0.5)) throw ValidationError("holdout must lie in [0, 0.5)");
  if (!(opts.ridge >= 0.0)) throw ValidationError("ridge must be >= 0");
  for (double w : s.weights) {
    if (!(w > 0.0)) throw ValidationError("solve: coalition weights must be > 0");
  }

  std::vector<std::size_t> all(s.masks.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const ReducedFit fit = fit_reduced(s, all, opts.ridge);

  Attribution out;
  out.phi = fit.phi;
  out.phi0 = s.v_empty;
  out.v_full = s.v_full;
  auto& d = out.diagnostics;
  d.fit_count = s.masks.size();
  d.cond = fit.cond;
  d.refinement_steps = fit.steps;

  std::vector<double> residuals;
  residuals.reserve(s.masks.size() + 2);
  for (std::size_t i = 0; i < s.masks.size(); ++i) {
    residuals.push_back(std::abs(s.values[i] - surrogate(out.phi, out.phi0, s.masks[i])));
  }
  residuals.push_back(std::abs(s.v_full - surrogate(out.phi, out.phi0, Coalition::all(m))));
  residuals.push_back(0.0);  // v(0) is matched by phi0 exactly
  d.residual_max = *std::max_element(residuals.begin(), residuals.end());
  d.residual_mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / static_cast<double>(residuals.size());
  d.residual_p50 = quantile(residuals, 0.5);
  d.residual_p90 = quantile(residuals, 0.9);

  // Generalization: refit without a seeded holdout split, score the split.
  const auto n = s.masks.size();
  const auto h = static_cast<std::size_t>(std::llround(opts.holdout * static_cast<double>(n)));
  if (h >= 1 && n - h >= m - 1) {
    std::vector<std::size_t> order = all;
    std::mt19937_64 rng(splitmix64(opts.seed ^ 0x686f6c646f7574ULL));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(h), order.end());
    std::sort(train.begin(), train.end());
    try {
      const ReducedFit aux = fit_reduced(s, train, opts.ridge);
      double abs_err = 0.0, mean = 0.0;
      for (auto i : test) mean += s.values[i];
      mean /= static_cast<double>(h);
      double ss_res = 0.0, ss_tot = 0.0;
      for (auto i : test) {
        const double e = s.values[i] - surrogate(aux.phi, s.v_empty, s.masks[i]);
        abs_err += std::abs(e);
        ss_res += e * e;
        ss_tot += (s.values[i] - mean) * (s.values[i] - mean);
      }
      d.holdout_count = h;
      d.holdout_mae = abs_err / static_cast<double>(h);
      const double scale = std::max(1.0, mean * mean) * static_cast<double>(h);
      if (ss_tot > 1e-24 * scale) {
        d.holdout_r2 = 1.0 - ss_res / ss_tot;
      } else {
        // Constant held-out values: perfect when the surrogate reproduces them.
        d.holdout_r2 = ss_res <= 1e-20 * scale ? 1.0 : 0.0;
      }
    } catch (const NumericalError&) {
      // Training split not identifiable; leave the holdout metrics unset.
    }
  }
  return out;
}

Attribution exact_shapley_table(const std::vector<double>& values, std::size_t m) {
  if (m < 1 || m > kMaxExactUnits) {
    throw ValidationError("exact Shapley supports 1 <= M <= " + std::to_string(kMaxExactUnits) +
                          ", got " + std::to_string(m));
  }
  const std::size_t total = std::size_t{1} << m;
  if (values.size() != total) throw ValidationError("exact Shapley table must hold 2^M values");
  // weight(s) = s! (M - s - 1)! / M! = 1 / (M * C(M - 1, s))
  std::vector<double> w(m);
  for (std::size_t s = 0; s < m; ++s) w[s] = 1.0 / (static_cast<double>(m) * binomial(m - 1, s));
  Attribution out;
  out.phi.assign(m, 0.0);
  out.phi0 = values[0];
  out.v_full = values[total - 1];
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double acc = 0.0;
    for (std::size_t set = 0; set < total; ++set) {
      if (set & bit) continue;
      acc += w[static_cast<std::size_t>(std::popcount(set))] * (values[set | bit] - values[set]);
    }
    out.phi[j] = acc;
  }
  return out;
}

Attribution exact_shapley(const ValueFunction& value, std::size_t m, int workers) {
  if (m < 1 || m > kMaxExactUnits) {
    throw ValidationError("exact Shapley refuses M=" + std::to_string(m) + " (limit " +
                          std::to_string(kMaxExactUnits) + ")");
  }
  const std::size_t total = std::size_t{1} << m;
  std::vector<double> values(total);
  parallel_for(total, workers, [&](std::size_t set) {
    Coalition c{std::vector<std::uint8_t>(m, 0)};
    for (std::size_t j = 0; j < m; ++j) c.keep[j] = (set >> j) & 1U;
    try {
      values[set] = value(c);
    } catch (...) {
      rethrow_with_context("coalition bitmask " + std::to_string(set) + ": ");
    }
  });
  return exact_shapley_table(values, m);
}

double relative_l1(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("relative_l1: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::abs(a[i] - b[i]);
    den += std::abs(b[i]);
  }
  return num / (den + 1e-12);
}

ConvergenceReport convergence_report(const ValueFunction& value, std::size_t m,
                                     const std::vector<std::size_t>& budgets, const ShapConfig& cfg,
                                     int workers) {
  if (budgets.empty()) throw ValidationError("convergence: no budgets given");
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i] <= budgets[i - 1]) throw ValidationError("convergence budgets must be strictly increasing");
  }
  std::mutex mu;
  std::map<std::vector<std::uint8_t>, double> memo;
  ValueFunction memoized = [&](const Coalition& c) {
    {
      std::lock_guard lock(mu);
      if (auto it = memo.find(c.keep); it != memo.end()) return it->second;
    }
    const double v = value(c);
    std::lock_guard lock(mu);
    memo.emplace(c.keep, v);
    return v;
  };

  ConvergenceReport report;
  report.num_units = m;
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    ShapConfig bc = cfg;
    bc.budget = budgets[b];
    bc.seed = splitmix64(cfg.seed + 0x1000 * (b + 1));
    const auto plan = sample_coalitions(m, bc);
    const auto sample = evaluate_coalitions(plan, m, memoized, workers);
    const auto attr = solve(sample, {cfg.ridge, cfg.holdout, bc.seed});
    BudgetReport r;
    r.budget = budgets[b];
    r.enumerated = plan.enumerated;
    r.phi = attr.phi;
    r.diagnostics = attr.diagnostics;
    if (!report.budgets.empty()) r.l1_change = relative_l1(attr.phi, report.budgets.back().phi);
    report.budgets.push_back(std::move(r));
  }
  return report;
}

}  // namespace voxshap
