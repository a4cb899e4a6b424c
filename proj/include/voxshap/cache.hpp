#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxshap/grid.hpp"
#include "voxshap/infer.hpp"

namespace voxshap {

// Hit/miss accounting for one coalition evaluation.
struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;

  std::size_t patches() const { return hits + misses; }
  double hit_rate() const {
    return patches() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(patches());
  }
};

// Running totals over many coalitions.
struct CacheTotals {
  std::size_t coalitions = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  double hit_rate_sum = 0.0;

  void add(const CacheStats& s) {
    ++coalitions;
    hits += s.hits;
    misses += s.misses;
    hit_rate_sum += s.hit_rate();
  }
  // Mean of the per-coalition hit rates.
  double mean_hit_rate() const {
    return coalitions == 0 ? 0.0 : hit_rate_sum / static_cast<double>(coalitions);
  }
  // Pooled hits / patches.
  double pooled_hit_rate() const {
    const auto n = hits + misses;
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  }
};

// Baseline patch logits keyed by patch origin, held in host memory.
// Entries are immutable after construction.
class PatchLogitCache {
 public:
  PatchLogitCache(PatchGrid grid, int num_classes, std::string crop_hash, std::string predictor_id,
                  std::map<Index3, std::vector<float>> entries);

  const PatchGrid& grid() const { return grid_; }
  int num_classes() const { return num_classes_; }
  const std::string& crop_hash() const { return crop_hash_; }
  const std::string& predictor_id() const { return predictor_id_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t memory_bytes() const;

  // Throws when the origin is not part of the grid.
  std::span<const float> at(const Index3& origin) const;
  const std::map<Index3, std::vector<float>>& entries() const { return entries_; }

  // True when the cache was built for this crop content, grid and predictor.
  bool matches(const Volume& crop, const PatchGrid& grid, const PatchPredictor& pred) const;

 private:
  PatchGrid grid_;
  int num_classes_;
  std::string crop_hash_;
  std::string predictor_id_;
  std::map<Index3, std::vector<float>> entries_;
};

std::string crop_content_hash(const Volume& crop);

struct BaselineInference {
  PatchLogitCache cache;
  LogitVolume logits;  // fused baseline, Z for the all-ones coalition
};

// One predictor call per grid origin on the unperturbed crop.
BaselineInference build_cache(const Volume& crop, const PatchGrid& grid, PatchPredictor& pred,
                              const PatchWeights& weights, int workers = 1);

enum class IntersectionTest { Scan, SummedArea };

// touched[i] == 1 when patch i contains at least one set voxel of pmask.
std::vector<std::uint8_t> touched_patches(const Mask& pmask, const PatchGrid& grid,
                                          IntersectionTest test = IntersectionTest::SummedArea);

struct CachedPrediction {
  LogitVolume logits;
  CacheStats stats;
};

// Sliding-window inference that reuses baseline logits for every patch the
// perturbation mask does not touch and forwards only the touched patches.
CachedPrediction cached_predict(const Volume& perturbed, const Mask& pmask,
                                const PatchLogitCache& cache, PatchPredictor& pred,
                                const PatchWeights& weights, int workers = 1,
                                IntersectionTest test = IntersectionTest::SummedArea);

// Idealized speedup 1 / (1 - h); nullopt means unbounded (h == 1).
std::optional<double> expected_speedup(double h);

// On-disk spill: <stem>.json header plus <stem>.bin entries, each entry
// being origin (3 x u32 LE), payload byte length (u64 LE), f32 LE logits.
void write_cache_spill(const std::filesystem::path& stem, const PatchLogitCache& cache);
PatchLogitCache read_cache_spill(const std::filesystem::path& stem);

}  // namespace voxshap
