#include "voxshap/infer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "voxshap/parallel.hpp"

namespace voxshap {

std::vector<std::int64_t> axis_origins(std::int64_t dim, std::int64_t patch, std::int64_t step) {
  std::vector<std::int64_t> out;
  std::int64_t o = 0;
  for (;;) {
    out.push_back(o);
    if (o + patch >= dim) break;
    o += step;
    if (o + patch > dim) o = dim - patch;
  }
  return out;
}

PatchGrid build_patch_grid(const Dims& dims, const Index3& patch_size, double overlap) {
  if (!(overlap > 0.0 && overlap < 1.0)) throw ValidationError("overlap must be in (0, 1)");
  PatchGrid g;
  g.dims = dims;
  std::vector<std::int64_t> per_axis[3];
  for (int a = 0; a < 3; ++a) {
    if (patch_size[a] < 1) throw ValidationError("patch size components must be >= 1");
    g.patch_size[a] = std::min(patch_size[a], dims[a]);
    g.step[a] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::floor(static_cast<double>(g.patch_size[a]) * (1.0 - overlap))));
    per_axis[a] = axis_origins(dims[a], g.patch_size[a], g.step[a]);
  }
  for (auto x : per_axis[0]) {
    for (auto y : per_axis[1]) {
      for (auto z : per_axis[2]) g.origins.push_back({x, y, z});
    }
  }
  return g;
}

PatchWeights gaussian_weight_patch(const Index3& patch_size, double sigma_scale) {
  if (!(sigma_scale > 0.0)) throw ValidationError("sigma_scale must be > 0");
  std::vector<double> axis[3];
  for (int a = 0; a < 3; ++a) {
    const auto p = patch_size[a];
    if (p < 1) throw ValidationError("patch size components must be >= 1");
    const double centre = (static_cast<double>(p) - 1.0) / 2.0;
    const double sigma = sigma_scale * static_cast<double>(p);
    axis[a].resize(static_cast<std::size_t>(p));
    for (std::int64_t i = 0; i < p; ++i) {
      const double d = static_cast<double>(i) - centre;
      axis[a][static_cast<std::size_t>(i)] = d * d / (2.0 * sigma * sigma);
    }
  }
  PatchWeights w{patch_size, {}};
  w.values.reserve(static_cast<std::size_t>(patch_size.x * patch_size.y * patch_size.z));
  for (std::int64_t z = 0; z < patch_size.z; ++z) {
    for (std::int64_t y = 0; y < patch_size.y; ++y) {
      for (std::int64_t x = 0; x < patch_size.x; ++x) {
        const double e = axis[0][x] + axis[1][y] + axis[2][z];
        w.values.push_back(std::max(std::exp(-e), 1e-6));
      }
    }
  }
  return w;
}

SyntheticPredictor::SyntheticPredictor(std::vector<double> slope, std::vector<double> bias)
    : slope_(std::move(slope)), bias_(std::move(bias)) {
  if (slope_.size() < 2 || slope_.size() != bias_.size()) {
    throw ValidationError("synthetic predictor needs >= 2 classes with matching slope/bias");
  }
  for (std::size_t c = 0; c < slope_.size(); ++c) {
    if (!std::isfinite(slope_[c]) || !std::isfinite(bias_[c])) {
      throw ValidationError("synthetic predictor coefficients must be finite");
    }
  }
}

SyntheticPredictor SyntheticPredictor::threshold(double threshold_hu, double gain) {
  return SyntheticPredictor({0.0, gain}, {0.0, -gain * threshold_hu});
}

std::string SyntheticPredictor::identity() const {
  std::string s = "synthetic:";
  char buf[64];
  for (std::size_t c = 0; c < slope_.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%s%.17g/%.17g", c ? ";" : "", slope_[c], bias_[c]);
    s += buf;
  }
  return s;
}

std::vector<float> SyntheticPredictor::predict(std::span<const float> patch, const Index3& shape) {
  const Dims d{shape.x, shape.y, shape.z};
  const auto n = d.count();
  if (patch.size() != n) throw ValidationError("synthetic predictor: patch length mismatch");

  // Separable clamped 3-tap box sums; the clamped window is a product of
  // per-axis ranges so its count factorizes too.
  std::vector<double> a(patch.begin(), patch.end()), b(n);
  auto pass = [&](const std::vector<double>& src, std::vector<double>& dst, int axis) {
    for (std::int64_t z = 0; z < d.nz; ++z) {
      for (std::int64_t y = 0; y < d.ny; ++y) {
        for (std::int64_t x = 0; x < d.nx; ++x) {
          Index3 p{x, y, z};
          double sum = 0.0;
          for (int o = -1; o <= 1; ++o) {
            Index3 q = p;
            q[axis] += o;
            if (q[axis] < 0 || q[axis] >= d[axis]) continue;
            sum += src[d.index(q)];
          }
          dst[d.index(p)] = sum;
        }
      }
    }
  };
  pass(a, b, 0);
  pass(b, a, 1);
  pass(a, b, 2);
  auto taps = [](std::int64_t i, std::int64_t dim) -> double {
    return static_cast<double>(1 + (i > 0 ? 1 : 0) + (i + 1 < dim ? 1 : 0));
  };

  const auto classes = slope_.size();
  std::vector<float> out(classes * n);
  for (std::int64_t z = 0; z < d.nz; ++z) {
    for (std::int64_t y = 0; y < d.ny; ++y) {
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const auto i = d.index(x, y, z);
        const double mean = b[i] / (taps(x, d.nx) * taps(y, d.ny) * taps(z, d.nz));
        for (std::size_t c = 0; c < classes; ++c) {
          out[c * n + i] = static_cast<float>(slope_[c] * mean + bias_[c]);
        }
      }
    }
  }
  return out;
}

std::vector<float> extract_patch(const Volume& crop, const Index3& origin, const Index3& shape) {
  std::vector<float> out(static_cast<std::size_t>(shape.x * shape.y * shape.z));
  std::size_t k = 0;
  for (std::int64_t z = 0; z < shape.z; ++z) {
    for (std::int64_t y = 0; y < shape.y; ++y) {
      const float* row = &crop.at(origin.x, origin.y + y, origin.z + z);
      std::copy(row, row + shape.x, out.begin() + static_cast<std::ptrdiff_t>(k));
      k += static_cast<std::size_t>(shape.x);
    }
  }
  return out;
}

std::vector<float> predict_patch(PatchPredictor& pred, const Volume& crop, const Index3& origin,
                                 const Index3& shape) {
  const std::string where = "patch at origin " + to_string(origin) + ": ";
  std::vector<float> logits;
  try {
    logits = pred.predict(extract_patch(crop, origin, shape), shape);
  } catch (...) {
    rethrow_with_context(where);
  }
  const auto expected =
      static_cast<std::size_t>(pred.num_classes()) * static_cast<std::size_t>(shape.x * shape.y * shape.z);
  if (logits.size() != expected) {
    throw ProtocolError(where + "predictor returned " + std::to_string(logits.size()) +
                        " logits, expected " + std::to_string(expected));
  }
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericalError(where + "predictor returned a non-finite logit");
  }
  return logits;
}

PatchFusion::PatchFusion(const Dims& dims, int num_classes, const PatchWeights& weights)
    : dims_(dims),
      num_classes_(num_classes),
      weights_(weights),
      numerator_(static_cast<std::size_t>(num_classes) * dims.count(), 0.0),
      denominator_(dims.count(), 0.0) {}

void PatchFusion::add(const Index3& origin, std::span<const float> patch_logits) {
  const Index3& s = weights_.size;
  const auto pn = static_cast<std::size_t>(s.x * s.y * s.z);
  const auto n = dims_.count();
  std::size_t k = 0;
  for (std::int64_t z = 0; z < s.z; ++z) {
    for (std::int64_t y = 0; y < s.y; ++y) {
      for (std::int64_t x = 0; x < s.x; ++x, ++k) {
        const auto i = dims_.index(origin.x + x, origin.y + y, origin.z + z);
        const double w = weights_.values[k];
        denominator_[i] += w;
        for (int c = 0; c < num_classes_; ++c) {
          numerator_[static_cast<std::size_t>(c) * n + i] += w * patch_logits[static_cast<std::size_t>(c) * pn + k];
        }
      }
    }
  }
}

LogitVolume PatchFusion::finish(const Spacing& spacing) const {
  LogitVolume out{dims_, spacing, num_classes_, std::vector<float>(numerator_.size())};
  const auto n = dims_.count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(denominator_[i] > 0.0)) {
      throw Error("fusion: voxel " + to_string(dims_.coord(i)) + " not covered by any patch");
    }
    for (int c = 0; c < num_classes_; ++c) {
      const auto k = static_cast<std::size_t>(c) * n + i;
      out.data[k] = static_cast<float>(numerator_[k] / denominator_[i]);
    }
  }
  return out;
}

namespace {

void check_compatible(const Volume& crop, const PatchGrid& grid, const PatchPredictor& pred,
                      const PatchWeights& weights) {
  if (!(crop.dims() == grid.dims)) {
    throw ValidationError("crop " + to_string(crop.dims()) + " does not match patch grid " +
                          to_string(grid.dims));
  }
  if (weights.size != grid.patch_size) throw ValidationError("weight patch does not match grid");
  if (auto ps = pred.patch_size(); ps && *ps != grid.patch_size) {
    throw ValidationError("predictor patch size " + to_string(*ps) + " differs from grid patch " +
                          to_string(grid.patch_size));
  }
  if (pred.num_channels() != 1) throw ValidationError("predictor must take a single input channel");
}

}  // namespace

LogitVolume sliding_window_predict(const Volume& crop, const PatchGrid& grid, PatchPredictor& pred,
                                   const PatchWeights& weights, int workers) {
  check_compatible(crop, grid, pred, weights);
  PatchFusion fusion(grid.dims, pred.num_classes(), weights);
  if (workers <= 1 || !pred.supports_concurrency()) {
    for (const auto& o : grid.origins) fusion.add(o, predict_patch(pred, crop, o, grid.patch_size));
  } else {
    std::vector<std::vector<float>> logits(grid.origins.size());
    parallel_for(grid.origins.size(), workers, [&](std::size_t i) {
      logits[i] = predict_patch(pred, crop, grid.origins[i], grid.patch_size);
    });
    for (std::size_t i = 0; i < logits.size(); ++i) fusion.add(grid.origins[i], logits[i]);
  }
  return fusion.finish(crop.spacing());
}

Mask hard_prediction(const LogitVolume& logits, int t) {
  if (t < 0 || t >= logits.num_classes) {
    throw ValidationError("target class " + std::to_string(t) + " outside [0, " +
                          std::to_string(logits.num_classes) + ")");
  }
  const auto n = logits.dims.count();
  Mask out(logits.dims, logits.spacing, std::uint8_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    float best_v = logits.data[i];
    for (int c = 1; c < logits.num_classes; ++c) {
      const float v = logits.data[static_cast<std::size_t>(c) * n + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[i] = best == t ? 1 : 0;
  }
  return out;
}

}  // namespace voxshap
