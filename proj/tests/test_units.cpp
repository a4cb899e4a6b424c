#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "voxshap/phantom.hpp"
#include "voxshap/units.hpp"

using namespace voxshap;

namespace {

struct Center {
  double x, y, z;
};

// Lattice rebuilt from its definition: cube pitch S with the four FCC offsets,
// cells in (x, y, z) lexicographic order, kept when inside the extent padded
// by S/2.
std::vector<Center> lattice(const Dims& d, const Spacing& sp, double s) {
  const double off[4][3] = {{0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}};
  const double ex = d.nx * sp.x, ey = d.ny * sp.y, ez = d.nz * sp.z;
  std::vector<Center> out;
  const int n = 2 + static_cast<int>(std::max({ex, ey, ez}) / s) + 2;
  for (int i = -3; i <= n; ++i)
    for (int j = -3; j <= n; ++j)
      for (int k = -3; k <= n; ++k)
        for (const auto& o : off) {
          const Center c{(i + o[0]) * s, (j + o[1]) * s, (k + o[2]) * s};
          if (c.x < -s / 2 || c.y < -s / 2 || c.z < -s / 2) continue;
          if (c.x > ex + s / 2 || c.y > ey + s / 2 || c.z > ez + s / 2) continue;
          out.push_back(c);
        }
  return out;
}

double dist2(const Center& c, const Index3& p, const Spacing& sp) {
  const double dx = (p.x + 0.5) * sp.x - c.x, dy = (p.y + 0.5) * sp.y - c.y, dz = (p.z + 0.5) * sp.z - c.z;
  return dx * dx + dy * dy + dz * dz;
}

// Brute-force nearest centre over every voxel/centre pair, then compaction
// in centre order.
std::vector<std::uint32_t> brute_force_fcc(const Dims& d, const Spacing& sp, double s) {
  const auto centers = lattice(d, sp, s);
  std::vector<std::size_t> nearest(d.count());
  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto p = d.coord(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double q = dist2(centers[c], p, sp);
      if (q < best) {
        best = q;
        nearest[i] = c;
      }
    }
  }
  std::set<std::size_t> used(nearest.begin(), nearest.end());
  std::map<std::size_t, std::uint32_t> id;
  for (auto c : used) id.emplace(c, static_cast<std::uint32_t>(id.size() + 1));
  std::vector<std::uint32_t> out(d.count());
  for (std::size_t i = 0; i < d.count(); ++i) out[i] = id.at(nearest[i]);
  return out;
}

LabelVolume random_labels(const Dims& d, int max_label, std::uint64_t seed, double zero_frac = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  LabelVolume l(d, {1, 1, 1});
  // Blocky labels so organs have spatial extent.
  for (std::size_t i = 0; i < l.size(); ++i) {
    const auto p = d.coord(i);
    std::mt19937_64 cell(seed * 1000003 + static_cast<std::uint64_t>((p.x / 3) + 7 * (p.y / 3) + 49 * (p.z / 2)));
    l[i] = static_cast<std::uint16_t>(1 + cell() % static_cast<std::uint64_t>(max_label));
    if (u(rng) < zero_frac) l[i] = 0;
  }
  return l;
}

}  // namespace

TEST(Organs, AscendingLabelOrder) {
  LabelVolume l({3, 1, 1}, {1, 1, 1}, std::vector<std::uint16_t>{7, 0, 3});
  const auto u = partition_full_organs(l);
  EXPECT_EQ(u.num_units, 2u);
  EXPECT_EQ(u.ids, (std::vector<std::uint32_t>{2, 0, 1}));
}

TEST(Organs, SingleLabel) {
  LabelVolume l({2, 2, 2}, {1, 1, 1}, std::uint16_t{5});
  const auto u = partition_full_organs(l);
  EXPECT_EQ(u.num_units, 1u);
  for (auto id : u.ids) EXPECT_EQ(id, 1u);
}

TEST(Organs, NoOrgansThrows) {
  LabelVolume l({2, 2, 2}, {1, 1, 1}, std::uint16_t{0});
  EXPECT_THROW(partition_full_organs(l), ValidationError);
}

TEST(FccCenters, HandEnumeratedSmallExtent) {
  const auto cs = fcc_centers({4, 4, 4}, {1, 1, 1}, {10.0});
  auto has = [&](double x, double y, double z) {
    for (const auto& c : cs)
      if (c.mm[0] == x && c.mm[1] == y && c.mm[2] == z) return true;
    return false;
  };
  EXPECT_TRUE(has(0, 0, 0));
  EXPECT_TRUE(has(5, 5, 0));
  EXPECT_TRUE(has(5, 0, 5));
  EXPECT_TRUE(has(0, 5, 5));
  int inside = 0;
  for (const auto& c : cs) {
    if (c.mm[0] >= 0 && c.mm[0] <= 4 && c.mm[1] >= 0 && c.mm[1] <= 4 && c.mm[2] >= 0 && c.mm[2] <= 4) ++inside;
  }
  EXPECT_EQ(inside, 1);
}

TEST(FccCenters, MatchesIndependentEnumeration) {
  for (double s : {3.0, 4.0, 7.5, 20.0}) {
    const Dims d{8, 6, 5};
    const Spacing sp{1.0, 1.5, 2.0};
    const auto got = fcc_centers(d, sp, {s});
    const auto want = lattice(d, sp, s);
    std::multiset<std::tuple<double, double, double>> a, b;
    for (const auto& c : got) a.insert({c.mm[0], c.mm[1], c.mm[2]});
    for (const auto& c : want) b.insert({c.x, c.y, c.z});
    EXPECT_EQ(a, b) << "S=" << s;
  }
}

TEST(FccCenters, DoublingScaleReducesCount) {
  const Dims d{20, 20, 20};
  for (double s : {2.0, 3.0, 5.0, 8.0}) {
    EXPECT_GT(fcc_centers(d, {1, 1, 1}, {s}).size(), fcc_centers(d, {1, 1, 1}, {2 * s}).size());
  }
}

TEST(Fcc, LargeScaleGivesOneUnit) {
  const auto u = partition_fcc({8, 8, 8}, {1, 1, 1}, {100.0});
  EXPECT_EQ(u.num_units, 1u);
}

TEST(Fcc, SubVoxelScaleAssignsEveryVoxel) {
  const auto u = partition_fcc({6, 5, 4}, {1, 1, 1}, {0.3});
  u.validate();
  for (auto id : u.ids) EXPECT_GE(id, 1u);
}

TEST(Fcc, MatchesBruteForceIsotropic) {
  const Dims d{8, 8, 8};
  const auto u = partition_fcc(d, {1, 1, 1}, {4.0});
  const auto oracle = brute_force_fcc(d, {1, 1, 1}, 4.0);
  EXPECT_EQ(u.ids, oracle);
  std::vector<std::size_t> counts(u.num_units + 1, 0);
  for (auto id : oracle) ++counts[id];
  EXPECT_EQ(u.counts(), counts);
}

TEST(Fcc, MatchesBruteForceAnisotropic) {
  const Dims d{8, 8, 8};
  const Spacing sp{5.0, 1.17, 1.17};
  for (double s : {3.0, 6.0, 10.0, 15.0}) {
    EXPECT_EQ(partition_fcc(d, sp, {s}).ids, brute_force_fcc(d, sp, s)) << "S=" << s;
  }
}

TEST(Fcc, NoCloserCenterExists) {
  const Dims d{7, 9, 5};
  const Spacing sp{2.0, 0.8, 3.1};
  const double s = 5.0;
  const auto u = partition_fcc(d, sp, {s});
  const auto centers = lattice(d, sp, s);
  // Each unit's centre is the common nearest centre of its voxels; check
  // that the assigned distance is minimal.
  std::map<std::uint32_t, std::set<std::size_t>> candidates;
  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto p = d.coord(i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : centers) best = std::min(best, dist2(c, p, sp));
    std::set<std::size_t> arg;
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (dist2(centers[c], p, sp) == best) arg.insert(c);
    auto& cand = candidates[u.ids[i]];
    if (cand.empty()) {
      cand = arg;
    } else {
      std::set<std::size_t> keep;
      for (auto c : cand)
        if (arg.count(c)) keep.insert(c);
      cand = keep;
    }
    ASSERT_FALSE(cand.empty()) << "voxel " << i;
  }
}

TEST(Fcc, AnisotropicUnitsRoughlyIsotropicInMm) {
  const Dims d{12, 52, 52};
  const Spacing sp{5.0, 1.17, 1.17};
  const auto u = partition_fcc(d, sp, {20.0});
  std::vector<Index3> lo(u.num_units + 1, {1 << 20, 1 << 20, 1 << 20}), hi(u.num_units + 1, {-1, -1, -1});
  for (std::size_t i = 0; i < d.count(); ++i) {
    const auto p = d.coord(i);
    auto& l = lo[u.ids[i]];
    auto& h = hi[u.ids[i]];
    for (int a = 0; a < 3; ++a) {
      l[a] = std::min(l[a], p[a]);
      h[a] = std::max(h[a], p[a]);
    }
  }
  int interior = 0;
  for (std::uint32_t j = 1; j <= u.num_units; ++j) {
    bool touches = false;
    for (int a = 0; a < 3; ++a) touches = touches || lo[j][a] == 0 || hi[j][a] == d[a] - 1;
    if (touches) continue;
    ++interior;
    std::array<double, 3> mm{};
    std::array<std::int64_t, 3> vox{};
    for (int a = 0; a < 3; ++a) {
      vox[a] = hi[j][a] - lo[j][a] + 1;
      mm[a] = static_cast<double>(vox[a]) * sp[a];
    }
    EXPECT_NE(vox[0], vox[1]);
    EXPECT_LE(*std::max_element(mm.begin(), mm.end()) / *std::min_element(mm.begin(), mm.end()), 2.0);
  }
  EXPECT_GT(interior, 0);
}

TEST(Hybrid, UniformLabelsEqualFcc) {
  const Dims d{8, 8, 8};
  const auto fcc = partition_fcc(d, {1, 1, 1}, {4.0});
  LabelVolume l(d, {1, 1, 1}, std::uint16_t{4});
  auto h = partition_hybrid(fcc, l);
  EXPECT_EQ(h.ids, fcc.ids);
  EXPECT_EQ(h.num_units, fcc.num_units);
}

TEST(Hybrid, StraddlingCellSplits) {
  const Dims d{4, 4, 4};
  const auto fcc = partition_fcc(d, {1, 1, 1}, {100.0});
  ASSERT_EQ(fcc.num_units, 1u);
  LabelVolume l(d, {1, 1, 1});
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = d.coord(i).x < 2 ? 1 : 2;
  const auto h = partition_hybrid(fcc, l);
  EXPECT_EQ(h.num_units, 2u);
}

TEST(Hybrid, RefinesBothParentsAndCountsAtLeastFccForeground) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Dims d{9, 8, 7};
    const Spacing sp{1.0, 1.0, 1.0};
    const auto fcc = partition_fcc(d, sp, {3.0 + static_cast<double>(seed % 4)});
    const auto l = random_labels(d, 4, seed);
    const auto h = partition_hybrid(fcc, l);
    h.validate();
    std::set<std::uint32_t> fcc_fg;
    std::map<std::uint32_t, std::uint32_t> to_fcc;
    std::map<std::uint32_t, std::uint16_t> to_organ;
    for (std::size_t i = 0; i < d.count(); ++i) {
      ASSERT_EQ(h.ids[i] == 0, l[i] == 0);
      if (l[i] == 0) continue;
      fcc_fg.insert(fcc.ids[i]);
      auto [a, ina] = to_fcc.emplace(h.ids[i], fcc.ids[i]);
      ASSERT_EQ(a->second, fcc.ids[i]);
      auto [b, inb] = to_organ.emplace(h.ids[i], l[i]);
      ASSERT_EQ(b->second, l[i]);
    }
    EXPECT_GE(h.num_units, fcc_fg.size());
  }
}

TEST(Hybrid, FragmentMergeKeepsRefinementOfOrgans) {
  const Dims d{12, 12, 12};
  const auto fcc = partition_fcc(d, {1, 1, 1}, {4.0});
  const auto l = random_labels(d, 3, 11, 0.0);
  const auto plain = partition_hybrid(fcc, l);
  const auto merged = partition_hybrid(fcc, l, {20});
  merged.validate();
  EXPECT_LT(merged.num_units, plain.num_units);
  std::map<std::uint32_t, std::uint16_t> organ;
  for (std::size_t i = 0; i < d.count(); ++i) {
    auto [it, _] = organ.emplace(merged.ids[i], l[i]);
    ASSERT_EQ(it->second, l[i]);
  }
  // Every plain unit lies inside one merged unit.
  std::map<std::uint32_t, std::uint32_t> parent;
  for (std::size_t i = 0; i < d.count(); ++i) {
    auto [it, _] = parent.emplace(plain.ids[i], merged.ids[i]);
    ASSERT_EQ(it->second, merged.ids[i]);
  }
}

TEST(Partitions, DeterministicAndSerializable) {
  PhantomSpec spec;
  spec.organs = 5;
  spec.spacing = {5.0, 1.17, 1.17};
  const auto p = make_phantom(spec);
  const auto a = partition_hybrid(partition_fcc(p.labels.dims(), p.labels.spacing(), {6.0}), p.labels, {3});
  const auto b = partition_hybrid(partition_fcc(p.labels.dims(), p.labels.spacing(), {6.0}), p.labels, {3});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.content_hash(), b.content_hash());
  const auto dir = std::filesystem::temp_directory_path() / "voxshap_units_io";
  std::filesystem::remove_all(dir);
  write_unit_map(dir / "u", a);
  const auto back = read_unit_map(dir / "u");
  EXPECT_EQ(back, a);
  auto c = a;
  c.ids[0] = c.num_units + 1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Partitions, UnitVoxelsCoverNonExcluded) {
  const Dims d{6, 6, 6};
  const auto fcc = partition_fcc(d, {1, 1, 1}, {3.0});
  const auto h = partition_hybrid(fcc, random_labels(d, 3, 5));
  const auto vox = unit_voxels(h);
  ASSERT_EQ(vox.size(), h.num_units);
  std::vector<int> seen(d.count(), 0);
  for (std::size_t j = 0; j < vox.size(); ++j) {
    EXPECT_FALSE(vox[j].empty());
    for (auto i : vox[j]) {
      EXPECT_EQ(h.ids[i], j + 1);
      ++seen[i];
    }
  }
  for (std::size_t i = 0; i < d.count(); ++i) EXPECT_EQ(seen[i], h.ids[i] ? 1 : 0);
}
