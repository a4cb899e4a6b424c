#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voxshap/cli.hpp"
#include "voxshap/vraw.hpp"

using namespace voxshap;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kAdapter = VOXSHAP_FAKE_ADAPTER;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("voxshap_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // Two organs split at x = 6 with a bright and a dark half; ROI ball at the centre.
    const Dims d{12, 12, 12};
    Volume vol(d, {1, 1, 1}, -1000.0f);
    LabelVolume lab(d, {1, 1, 1});
    Mask roi(d, {1, 1, 1});
    for (std::int64_t z = 0; z < 12; ++z)
      for (std::int64_t y = 0; y < 12; ++y)
        for (std::int64_t x = 0; x < 12; ++x) {
          const auto i = d.index(x, y, z);
          lab[i] = x < 6 ? 1 : 2;
          vol[i] = x < 6 ? 120.0f + static_cast<float>((x * 7 + y * 3 + z) % 11) : -40.0f;
          const double r2 = (x - 5.5) * (x - 5.5) + (y - 5.5) * (y - 5.5) + (z - 5.5) * (z - 5.5);
          roi[i] = r2 <= 4.0 ? 1 : 0;
        }
    vraw::write(dir_ / "volume", vol);
    vraw::write(dir_ / "labels", lab);
    vraw::write(dir_ / "roi", roi);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::vector<std::string> base(const std::string& sub, const std::string& out) const {
    return {sub,        "--volume", (dir_ / "volume").string(), "--labels", (dir_ / "labels").string(),
            "--roi",    (dir_ / "roi").string(), "--out",       (dir_ / out).string(), "--patch", "4,4,4"};
  }
  json read(const fs::path& p) const {
    std::ifstream in(p);
    return json::parse(in);
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

int run(std::vector<std::string> args, std::initializer_list<std::string> extra = {}) {
  args.insert(args.end(), extra.begin(), extra.end());
  return cli::run(args);
}

}  // namespace

TEST_F(CliTest, PartitionOrgansAndDeterminism) {
  ASSERT_EQ(run(base("partition", "a")), cli::kExitOk);
  ASSERT_EQ(run(base("partition", "b")), cli::kExitOk);
  const auto p = read(dir_ / "a" / "partition.json");
  EXPECT_EQ(p["M"], 2);
  EXPECT_EQ(p["kind"], "organs");
  EXPECT_EQ(slurp(dir_ / "a" / "units.raw"), slurp(dir_ / "b" / "units.raw"));
  EXPECT_EQ(p["unit_map_hash"], read(dir_ / "b" / "partition.json")["unit_map_hash"]);
}

TEST_F(CliTest, PartitionFccWithHugeScaleIsOneUnit) {
  ASSERT_EQ(run(base("partition", "f"), {"--units", "fcc", "--scale-mm", "500"}), cli::kExitOk);
  EXPECT_EQ(read(dir_ / "f" / "partition.json")["M"], 1);
  ASSERT_EQ(run(base("partition", "h"), {"--units", "hybrid", "--scale-mm", "500"}), cli::kExitOk);
  EXPECT_EQ(read(dir_ / "h" / "partition.json")["M"], 2);
}

TEST_F(CliTest, AttributeMatchesExactAndWritesMap) {
  ASSERT_EQ(run(base("attribute", "o"), {"--units", "fcc", "--scale-mm", "14", "--score", "tp,fp", "--exact",
                                         "--budget", "200"}),
            cli::kExitOk);
  const auto tp = read(dir_ / "o" / "attribution_tp.json");
  EXPECT_LE(tp["exact"]["max_abs_diff"].get<double>(), 1e-6);
  const auto m = tp["num_units"].get<std::size_t>();
  EXPECT_EQ(tp["phi"].size(), m);
  double sum = 0;
  for (double v : tp["phi"]) sum += v;
  EXPECT_NEAR(sum, tp["v_full"].get<double>() - tp["phi0"].get<double>(), 1e-9);
  const auto fp = read(dir_ / "o" / "attribution_fp.json");
  EXPECT_EQ(fp["v_full"].get<double>(), 0.0);
  const auto hdr = vraw::read_header(dir_ / "o" / "attribution_tp_map");
  EXPECT_EQ(hdr.dims, (Dims{12, 12, 12}));
  EXPECT_GT(tp["cache"]["mean_hit_rate"].get<double>(), 0.0);
}

TEST_F(CliTest, CurvesFromAttribution) {
  ASSERT_EQ(run(base("attribute", "o"), {"--score", "dice", "--budget", "4"}), cli::kExitOk);
  const auto attr = (dir_ / "o" / "attribution_dice.json").string();
  ASSERT_EQ(run(base("curves", "o"), {"--score", "dice", "--attribution", attr}), cli::kExitOk);
  std::ifstream in(dir_ / "o" / "curves_dice.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2 * (2 + 1));
  const auto metrics = read(dir_ / "o" / "metrics_dice.json");
  EXPECT_EQ(metrics["K"], 2);
  EXPECT_TRUE(metrics.contains("naopc"));

  // A different partition must not be scored against this attribution.
  EXPECT_EQ(run(base("curves", "x"), {"--units", "fcc", "--scale-mm", "500", "--attribution", attr}),
            cli::kExitValidation);
}

TEST_F(CliTest, ConvergenceAndCacheStats) {
  ASSERT_EQ(run(base("convergence", "c"), {"--units", "fcc", "--scale-mm", "14", "--budgets", "30,60"}),
            cli::kExitOk);
  const auto c = read(dir_ / "c" / "convergence_tp.json");
  ASSERT_EQ(c["budgets"].size(), 2u);
  EXPECT_TRUE(c["budgets"][0]["l1_change"].is_null());
  ASSERT_EQ(run(base("cache-stats", "s"), {"--budget", "4", "--spill", (dir_ / "s" / "cache").string()}),
            cli::kExitOk);
  const auto s = read(dir_ / "s" / "cache_stats.json");
  EXPECT_EQ(s["single_unit_removal"].size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "s" / "cache.bin"));
}

TEST_F(CliTest, ExecPredictorAgreesWithSynthetic) {
  ASSERT_EQ(run(base("attribute", "syn"), {"--budget", "4", "--synthetic-threshold", "25", "--synthetic-gain",
                                           "0.02"}),
            cli::kExitOk);
  ASSERT_EQ(run(base("attribute", "ext"),
                {"--budget", "4", "--predictor", "exec:" + kAdapter + " --threshold 25 --gain 0.02"}),
            cli::kExitOk);
  const auto a = read(dir_ / "syn" / "attribution_tp.json")["phi"];
  const auto b = read(dir_ / "ext" / "attribution_tp.json")["phi"];
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].get<double>(), b[i].get<double>(), 1e-6);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run(base("attribute", "e"), {"--predictor", "exec:" + kAdapter + " --mode bad-version"}),
            cli::kExitProtocol);
  EXPECT_EQ(run(base("attribute", "e"), {"--predictor", "exec:" + kAdapter + " --mode truncate"}),
            cli::kExitProtocol);
  EXPECT_EQ(run(base("attribute", "e"), {"--score", "iou"}), cli::kExitValidation);
  EXPECT_EQ(run(base("attribute", "e"), {"--budget", "2"}), cli::kExitValidation);
  EXPECT_EQ(run({"attribute", "--volume", (dir_ / "missing").string()}), cli::kExitValidation);
  EXPECT_EQ(run({"nope"}), cli::kExitValidation);
}

TEST_F(CliTest, ConfigFileThenFlags) {
  const auto cfg = dir_ / "cfg.json";
  std::ofstream(cfg) << R"({"budget": 5, "seed": 3, "units": "fcc", "scale_mm": 500})";
  ASSERT_EQ(run(base("attribute", "p"), {"--config", cfg.string(), "--seed", "4"}), cli::kExitOk);
  const auto j = read(dir_ / "p" / "attribution_tp.json");
  EXPECT_EQ(j["config"]["budget"], 5);
  EXPECT_EQ(j["config"]["seed"], 4);
  EXPECT_EQ(j["config"]["units"], "fcc");
  EXPECT_EQ(j["num_units"], 1);

  // An attribution file replays its own configuration.
  const auto replay = (dir_ / "p" / "attribution_tp.json").string();
  ASSERT_EQ(run({"attribute", "--config", replay, "--out", (dir_ / "q").string()}), cli::kExitOk);
  EXPECT_EQ(read(dir_ / "q" / "attribution_tp.json")["phi"], j["phi"]);

  std::ofstream(dir_ / "bad.json") << R"({"budgte": 5})";
  EXPECT_EQ(run(base("attribute", "p"), {"--config", (dir_ / "bad.json").string()}), cli::kExitValidation);
}
