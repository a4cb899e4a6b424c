#include "voxshap/curves.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "voxshap/error.hpp"

namespace voxshap {

std::string to_string(Ordering o) { return o == Ordering::MoRF ? "morf" : "lerf"; }

std::vector<std::size_t> rank_units(const std::vector<double>& phi, Ordering o) {
  std::vector<std::size_t> ids(phi.size());
  std::iota(ids.begin(), ids.end(), std::size_t{1});
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return o == Ordering::MoRF ? phi[a - 1] > phi[b - 1] : phi[a - 1] < phi[b - 1];
  });
  return ids;
}

std::vector<std::size_t> removal_schedule(std::size_t m, std::size_t k_max) {
  if (m < 1) throw ValidationError("removal schedule needs M >= 1");
  if (k_max < 1) throw ValidationError("k_max must be >= 1");
  std::vector<std::size_t> out;
  if (m <= k_max) {
    for (std::size_t k = 1; k <= m; ++k) out.push_back(k);
    return out;
  }
  const std::size_t batch = m / k_max;
  for (std::size_t k = 1; k < k_max; ++k) out.push_back(k * batch);
  out.push_back(m);
  return out;
}

PerturbationCurve deletion_curve(const std::vector<std::size_t>& order, Ordering kind,
                                 const ScoreFunction& score, std::size_t k_max) {
  const std::size_t m = order.size();
  {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i) {
      if (sorted[i] != i + 1) throw ValidationError("deletion order must be a permutation of 1..M");
    }
  }
  PerturbationCurve curve;
  curve.ordering = kind;
  curve.num_units = m;
  Coalition c = Coalition::all(m);
  auto eval = [&](std::size_t k) {
    try {
      return score(c);
    } catch (...) {
      rethrow_with_context(to_string(kind) + " step " + std::to_string(k) + ": ");
    }
  };
  curve.steps.push_back({0, 0, 0.0, eval(0)});
  std::size_t removed = 0;
  const auto schedule = removal_schedule(m, k_max);
  for (std::size_t k = 1; k <= schedule.size(); ++k) {
    for (; removed < schedule[k - 1]; ++removed) c.keep[order[removed] - 1] = 0;
    curve.steps.push_back(
        {k, removed, static_cast<double>(removed) / static_cast<double>(m), eval(k)});
  }
  return curve;
}

double aopc(const PerturbationCurve& curve) {
  if (curve.K() < 1) throw ValidationError("curve has no removal steps");
  double acc = 0.0;
  const double s0 = curve.steps[0].score;
  for (std::size_t k = 1; k < curve.steps.size(); ++k) acc += s0 - curve.steps[k].score;
  return acc / static_cast<double>(curve.K());
}

double abpc(const PerturbationCurve& lerf, const PerturbationCurve& morf) {
  if (lerf.K() < 1) throw ValidationError("curve has no removal steps");
  if (lerf.K() != morf.K() || lerf.num_units != morf.num_units) {
    throw ValidationError("ABPC schedule mismatch: K=" + std::to_string(lerf.K()) + " vs K=" +
                          std::to_string(morf.K()));
  }
  double acc = 0.0;
  for (std::size_t k = 1; k < lerf.steps.size(); ++k) {
    if (lerf.steps[k].units_removed != morf.steps[k].units_removed) {
      throw ValidationError("ABPC schedule mismatch at step " + std::to_string(k));
    }
    acc += lerf.steps[k].score - morf.steps[k].score;
  }
  return acc / static_cast<double>(lerf.K());
}

PerturbationCurve normalize_curve(const PerturbationCurve& curve, double s_max, double s_min, double eps) {
  if (!std::isfinite(s_max) || !std::isfinite(s_min)) throw ValidationError("normalization bounds must be finite");
  PerturbationCurve out = curve;
  const double den = s_max - s_min + eps;
  for (auto& s : out.steps) s.score = (s.score - s_min) / den;
  return out;
}

CurveMetrics curve_metrics(const PerturbationCurve& morf, const PerturbationCurve& lerf, double eps) {
  CurveMetrics r;
  r.s_max = morf.steps.front().score;
  r.s_min = morf.steps.back().score;
  r.aopc = aopc(morf);
  r.abpc = abpc(lerf, morf);
  const auto nm = normalize_curve(morf, r.s_max, r.s_min, eps);
  const auto nl = normalize_curve(lerf, r.s_max, r.s_min, eps);
  r.n_aopc = aopc(nm);
  r.n_abpc = abpc(nl, nm);
  r.degenerate_range = !(r.s_max - r.s_min > eps);
  const double tol = 1e-9;
  for (const auto* c : {&nm, &nl}) {
    for (const auto& s : c->steps) {
      if (s.score < -tol || s.score > 1.0 + tol) r.out_of_range = true;
    }
  }
  return r;
}

std::string curves_csv(const PerturbationCurve& morf, const PerturbationCurve& lerf,
                       const CurveMetrics& metrics, bool header) {
  std::string out;
  if (header) out += "ordering,k,units_removed,fraction_removed,score,normalized_score\n";
  char buf[256];
  for (const auto* c : {&morf, &lerf}) {
    const auto norm = normalize_curve(*c, metrics.s_max, metrics.s_min);
    for (std::size_t k = 0; k < c->steps.size(); ++k) {
      const auto& s = c->steps[k];
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.17g,%.17g,%.17g\n", to_string(c->ordering).c_str(), s.k,
                    s.units_removed, s.fraction_removed, s.score, norm.steps[k].score);
      out += buf;
    }
  }
  return out;
}

}  // namespace voxshap
