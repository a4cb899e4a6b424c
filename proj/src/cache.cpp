#include "voxshap/cache.hpp"

#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "voxshap/bytes.hpp"
#include "voxshap/hash.hpp"
#include "voxshap/parallel.hpp"

namespace voxshap {

PatchLogitCache::PatchLogitCache(PatchGrid grid, int num_classes, std::string crop_hash,
                                 std::string predictor_id,
                                 std::map<Index3, std::vector<float>> entries)
    : grid_(std::move(grid)),
      num_classes_(num_classes),
      crop_hash_(std::move(crop_hash)),
      predictor_id_(std::move(predictor_id)),
      entries_(std::move(entries)) {
  const auto expected = static_cast<std::size_t>(num_classes_) * grid_.patch_voxels();
  if (entries_.size() != grid_.origins.size()) {
    throw ValidationError("cache has " + std::to_string(entries_.size()) + " entries for " +
                          std::to_string(grid_.origins.size()) + " patches");
  }
  for (const auto& o : grid_.origins) {
    auto it = entries_.find(o);
    if (it == entries_.end()) throw ValidationError("cache missing patch " + to_string(o));
    if (it->second.size() != expected) {
      throw ValidationError("cache entry " + to_string(o) + " has wrong length");
    }
  }
}

std::size_t PatchLogitCache::memory_bytes() const {
  std::size_t n = 0;
  for (const auto& [o, v] : entries_) n += v.size() * sizeof(float);
  return n;
}

std::span<const float> PatchLogitCache::at(const Index3& origin) const {
  auto it = entries_.find(origin);
  if (it == entries_.end()) throw ValidationError("no cached logits for patch " + to_string(origin));
  return it->second;
}

bool PatchLogitCache::matches(const Volume& crop, const PatchGrid& grid,
                              const PatchPredictor& pred) const {
  return grid == grid_ && pred.identity() == predictor_id_ && pred.num_classes() == num_classes_ &&
         crop_content_hash(crop) == crop_hash_;
}

std::string crop_content_hash(const Volume& crop) {
  std::vector<std::uint8_t> buf;
  const auto& d = crop.dims();
  bytes::append_le<std::int64_t>(buf, d.nx);
  bytes::append_le<std::int64_t>(buf, d.ny);
  bytes::append_le<std::int64_t>(buf, d.nz);
  const auto payload = bytes::encode_le<float>(crop.data());
  buf.insert(buf.end(), payload.begin(), payload.end());
  return sha256_hex(buf);
}

BaselineInference build_cache(const Volume& crop, const PatchGrid& grid, PatchPredictor& pred,
                              const PatchWeights& weights, int workers) {
  if (!(crop.dims() == grid.dims)) throw ValidationError("crop does not match patch grid");
  if (weights.size != grid.patch_size) throw ValidationError("weight patch does not match grid");
  std::vector<std::vector<float>> logits(grid.origins.size());
  const int w = pred.supports_concurrency() ? workers : 1;
  parallel_for(grid.origins.size(), w, [&](std::size_t i) {
    logits[i] = predict_patch(pred, crop, grid.origins[i], grid.patch_size);
  });
  PatchFusion fusion(grid.dims, pred.num_classes(), weights);
  std::map<Index3, std::vector<float>> entries;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    fusion.add(grid.origins[i], logits[i]);
    entries.emplace(grid.origins[i], std::move(logits[i]));
  }
  return {PatchLogitCache(grid, pred.num_classes(), crop_content_hash(crop), pred.identity(),
                          std::move(entries)),
          fusion.finish(crop.spacing())};
}

std::vector<std::uint8_t> touched_patches(const Mask& pmask, const PatchGrid& grid,
                                          IntersectionTest test) {
  if (!(pmask.dims() == grid.dims)) throw ValidationError("perturbation mask does not match grid");
  std::vector<std::uint8_t> touched(grid.origins.size(), 0);
  const auto& d = grid.dims;
  if (test == IntersectionTest::Scan) {
    for (std::size_t p = 0; p < grid.origins.size(); ++p) {
      const auto b = grid.box(p);
      bool hit = false;
      for (auto z = b.min.z; z <= b.max.z && !hit; ++z) {
        for (auto y = b.min.y; y <= b.max.y && !hit; ++y) {
          for (auto x = b.min.x; x <= b.max.x; ++x) {
            if (pmask.at(x, y, z)) {
              hit = true;
              break;
            }
          }
        }
      }
      touched[p] = hit ? 1 : 0;
    }
    return touched;
  }

  // 3D summed-area table with a zero border: S(x,y,z) = sum over [0,x) x [0,y) x [0,z).
  const std::int64_t sx = d.nx + 1, sy = d.ny + 1;
  std::vector<std::uint32_t> sat(static_cast<std::size_t>(sx * sy * (d.nz + 1)), 0);
  auto S = [&](std::int64_t x, std::int64_t y, std::int64_t z) -> std::uint32_t& {
    return sat[static_cast<std::size_t>(x + sx * (y + sy * z))];
  };
  for (std::int64_t z = 1; z <= d.nz; ++z) {
    for (std::int64_t y = 1; y <= d.ny; ++y) {
      for (std::int64_t x = 1; x <= d.nx; ++x) {
        S(x, y, z) = pmask.at(x - 1, y - 1, z - 1) + S(x - 1, y, z) + S(x, y - 1, z) +
                     S(x, y, z - 1) - S(x - 1, y - 1, z) - S(x - 1, y, z - 1) -
                     S(x, y - 1, z - 1) + S(x - 1, y - 1, z - 1);
      }
    }
  }
  for (std::size_t p = 0; p < grid.origins.size(); ++p) {
    const auto b = grid.box(p);
    const auto x0 = b.min.x, y0 = b.min.y, z0 = b.min.z;
    const auto x1 = b.max.x + 1, y1 = b.max.y + 1, z1 = b.max.z + 1;
    const std::uint32_t sum = S(x1, y1, z1) - S(x0, y1, z1) - S(x1, y0, z1) - S(x1, y1, z0) +
                              S(x0, y0, z1) + S(x0, y1, z0) + S(x1, y0, z0) - S(x0, y0, z0);
    touched[p] = sum != 0 ? 1 : 0;
  }
  return touched;
}

CachedPrediction cached_predict(const Volume& perturbed, const Mask& pmask,
                                const PatchLogitCache& cache, PatchPredictor& pred,
                                const PatchWeights& weights, int workers, IntersectionTest test) {
  const PatchGrid& grid = cache.grid();
  if (!(perturbed.dims() == grid.dims) || !(pmask.dims() == grid.dims)) {
    throw ValidationError("perturbed crop / mask do not match the cached patch grid");
  }
  if (pred.identity() != cache.predictor_id() || pred.num_classes() != cache.num_classes()) {
    throw ValidationError("cache was built with a different predictor");
  }
  if (weights.size != grid.patch_size) throw ValidationError("weight patch does not match grid");

  const auto touched = touched_patches(pmask, grid, test);
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < touched.size(); ++i) {
    if (touched[i]) misses.push_back(i);
  }
  std::vector<std::vector<float>> fresh(misses.size());
  const int w = pred.supports_concurrency() ? workers : 1;
  parallel_for(misses.size(), w, [&](std::size_t k) {
    fresh[k] = predict_patch(pred, perturbed, grid.origins[misses[k]], grid.patch_size);
  });

  PatchFusion fusion(grid.dims, cache.num_classes(), weights);
  std::size_t k = 0;
  for (std::size_t i = 0; i < grid.origins.size(); ++i) {
    if (touched[i]) {
      fusion.add(grid.origins[i], fresh[k++]);
    } else {
      fusion.add(grid.origins[i], cache.at(grid.origins[i]));
    }
  }
  CacheStats stats{grid.origins.size() - misses.size(), misses.size()};
  return {fusion.finish(perturbed.spacing()), stats};
}

std::optional<double> expected_speedup(double h) {
  if (!(h >= 0.0 && h <= 1.0)) throw ValidationError("hit rate must lie in [0, 1]");
  if (h == 1.0) return std::nullopt;
  return 1.0 / (1.0 - h);
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  return std::filesystem::path(stem.string() + ext);
}

nlohmann::json index3_json(const Index3& v) { return {v.x, v.y, v.z}; }

Index3 index3_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<std::int64_t>>();
  if (v.size() != 3) throw ValidationError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

void write_cache_spill(const std::filesystem::path& stem, const PatchLogitCache& cache) {
  const auto& g = cache.grid();
  nlohmann::json header = {
      {"voxshap_cache", 1},
      {"grid",
       {{"dims", {g.dims.nx, g.dims.ny, g.dims.nz}},
        {"patch_size", index3_json(g.patch_size)},
        {"step", index3_json(g.step)},
        {"num_patches", g.origins.size()}}},
      {"num_classes", cache.num_classes()},
      {"crop_hash", cache.crop_hash()},
      {"predictor", cache.predictor_id()},
      {"entries", cache.size()},
      {"payload", "f32-le class-major x-fastest"},
      {"memory_bytes", cache.memory_bytes()},
  };
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(with_suffix(stem, ".json"));
    if (!out) throw ValidationError("cannot write cache header for " + stem.string());
    out << header.dump(2) << '\n';
  }
  std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write cache entries for " + stem.string());
  for (const auto& o : g.origins) {
    const auto logits = cache.at(o);
    std::vector<std::uint8_t> rec;
    for (int a = 0; a < 3; ++a) bytes::append_le<std::uint32_t>(rec, static_cast<std::uint32_t>(o[a]));
    bytes::append_le<std::uint64_t>(rec, logits.size_bytes());
    const auto payload = bytes::encode_le<float>(logits);
    rec.insert(rec.end(), payload.begin(), payload.end());
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw ValidationError("short write on cache spill " + stem.string());
}

PatchLogitCache read_cache_spill(const std::filesystem::path& stem) {
  std::ifstream hin(with_suffix(stem, ".json"));
  if (!hin) throw ValidationError("cannot open cache header for " + stem.string());
  nlohmann::json header;
  PatchGrid grid;
  int num_classes = 0;
  try {
    hin >> header;
    if (header.at("voxshap_cache").get<int>() != 1) throw ValidationError("unsupported cache version");
    const auto d = index3_from(header.at("grid").at("dims"));
    grid.dims = {d.x, d.y, d.z};
    grid.patch_size = index3_from(header.at("grid").at("patch_size"));
    grid.step = index3_from(header.at("grid").at("step"));
    num_classes = header.at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cache header " + stem.string() + ": " + e.what());
  }
  std::vector<std::int64_t> axes[3];
  for (int a = 0; a < 3; ++a) axes[a] = axis_origins(grid.dims[a], grid.patch_size[a], grid.step[a]);
  for (auto x : axes[0]) {
    for (auto y : axes[1]) {
      for (auto z : axes[2]) grid.origins.push_back({x, y, z});
    }
  }

  std::ifstream in(with_suffix(stem, ".bin"), std::ios::binary);
  if (!in) throw ValidationError("cannot open cache entries for " + stem.string());
  std::map<Index3, std::vector<float>> entries;
  std::uint64_t offset = 0;
  for (;;) {
    std::uint8_t rec[20];
    in.read(reinterpret_cast<char*>(rec), sizeof rec);
    if (in.gcount() == 0) break;
    if (in.gcount() != sizeof rec) {
      throw ValidationError("truncated cache entry header at byte " + std::to_string(offset));
    }
    const Index3 o{bytes::load_le<std::uint32_t>(rec), bytes::load_le<std::uint32_t>(rec + 4),
                   bytes::load_le<std::uint32_t>(rec + 8)};
    const auto len = bytes::load_le<std::uint64_t>(rec + 12);
    if (len % sizeof(float) != 0 || len > (std::uint64_t{1} << 34)) {
      throw ValidationError("bad cache payload length at byte " + std::to_string(offset));
    }
    std::vector<std::uint8_t> payload(len);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) {
      throw ValidationError("truncated cache payload at byte " + std::to_string(offset + 20));
    }
    entries.emplace(o, bytes::decode_le<float>(payload));
    offset += 20 + len;
  }
  return PatchLogitCache(std::move(grid), num_classes, header.at("crop_hash").get<std::string>(),
                         header.at("predictor").get<std::string>(), std::move(entries));
}

}  // namespace voxshap
