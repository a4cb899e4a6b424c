#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxshap/grid.hpp"

namespace voxshap::cli {

// Resolved settings of one invocation. Serialized verbatim into every
// output artifact.
struct RunConfig {
  std::string volume;
  std::string labels;
  std::string roi;
  std::string out = "out";
  std::string unit_map;     // optional precomputed partition
  std::string attribution;  // curves input

  std::string units = "organs";
  double scale_mm = 20.0;
  std::uint32_t min_fragment = 0;

  std::vector<std::string> score{"tp"};
  int target_class = 1;
  double dice_epsilon = 1e-6;

  std::size_t budget = 1000;
  std::vector<std::size_t> budgets;
  std::uint64_t seed = 0;
  double holdout = 0.1;
  double ridge = 1e-8;
  double l1_threshold = 0.05;
  bool exact = false;

  Index3 patch{8, 8, 8};
  double overlap = 0.5;
  double sigma_scale = 0.125;
  double baseline_hu = -1024.0;
  std::size_t k_max = 20;

  std::string predictor = "synthetic";
  int num_classes = 2;
  double synthetic_threshold = 0.0;
  double synthetic_gain = 0.01;
  int timeout_ms = 30000;
  int workers = 0;
  std::string spill;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep the values already in `c`.
void merge_json(RunConfig& c, const nlohmann::json& j);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitProtocol = 3;
inline constexpr int kExitNumerical = 4;

// Entry point; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace voxshap::cli
