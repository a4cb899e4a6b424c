#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "voxshap/grid.hpp"
#include "voxshap/hash.hpp"
#include "voxshap/vraw.hpp"

using namespace voxshap;
namespace fs = std::filesystem;

namespace {

Mask mask_with(const Dims& d, std::initializer_list<Index3> pts) {
  Mask m(d, {1, 1, 1}, std::uint8_t{0});
  for (const auto& p : pts) m.at(p) = 1;
  return m;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("voxshap_grid_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Dims, LinearIndexRoundTrip) {
  const Dims d{5, 3, 4};
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const auto i = d.index(x, y, z);
        EXPECT_EQ(i, static_cast<std::size_t>(x + d.nx * (y + d.ny * z)));
        EXPECT_EQ(d.coord(i), (Index3{x, y, z}));
      }
}

TEST(Raster, RejectsBadShapes) {
  EXPECT_THROW(Volume(Dims{0, 2, 2}, {1, 1, 1}), ValidationError);
  EXPECT_THROW(Volume(Dims{2, 2, 2}, {1, 0, 1}), ValidationError);
  EXPECT_THROW(Volume(Dims{2, 2, 2}, {1, 1, 1}, std::vector<float>(7)), ValidationError);
}

TEST(CubicBBox, SingleVoxelIsAlreadyCubic) {
  const auto r = cubic_bbox(mask_with({20, 20, 20}, {{5, 5, 5}}));
  EXPECT_EQ(r.box.min, (Index3{5, 5, 5}));
  EXPECT_EQ(r.box.max, (Index3{5, 5, 5}));
  EXPECT_FALSE(r.non_cubic);
}

TEST(CubicBBox, InteriorExpansionIsSymmetricAndContains) {
  // Tight extents (3, 5, 2) at min (20, 30, 40).
  const auto roi = mask_with({64, 64, 64}, {{20, 30, 40}, {22, 34, 41}});
  const auto r = cubic_bbox(roi);
  EXPECT_FALSE(r.non_cubic);
  EXPECT_EQ(r.box.extent(), (Index3{5, 5, 5}));
  EXPECT_TRUE(r.box.contains(tight_bbox(roi)));
  // grow 2 on x: one voxel per side; grow 3 on z: 1 below, 2 above.
  EXPECT_EQ(r.box.min, (Index3{19, 30, 39}));
  EXPECT_EQ(r.box.max, (Index3{23, 34, 43}));
}

TEST(CubicBBox, BoundaryOverflowShiftsToOppositeSide) {
  const Dims d{16, 16, 16};
  const auto roi = mask_with(d, {{0, 4, 4}, {1, 9, 7}});
  const auto r = cubic_bbox(roi);
  EXPECT_EQ(r.box.min.x, 0);
  EXPECT_EQ(r.box.extent(), (Index3{6, 6, 6}));
  EXPECT_TRUE(r.box.within(d));
  // Brute force: no in-bounds cube with a smaller side contains the ROI.
  const auto tight = tight_bbox(roi);
  for (std::int64_t side = 1; side < 6; ++side)
    for (std::int64_t x = 0; x + side <= 16; ++x)
      for (std::int64_t y = 0; y + side <= 16; ++y)
        for (std::int64_t z = 0; z + side <= 16; ++z) {
          BBox c{{x, y, z}, {x + side - 1, y + side - 1, z + side - 1}};
          ASSERT_FALSE(c.contains(tight));
        }
}

TEST(CubicBBox, ClampsWhenSideExceedsVolume) {
  const auto roi = mask_with({10, 4, 10}, {{0, 1, 0}, {8, 2, 3}});
  const auto r = cubic_bbox(roi);
  EXPECT_TRUE(r.non_cubic);
  EXPECT_EQ(r.box.min.y, 0);
  EXPECT_EQ(r.box.max.y, 3);
  EXPECT_EQ(r.box.extent().x, 9);
  EXPECT_EQ(r.box.extent().z, 9);
}

TEST(CubicBBox, EmptyRoiThrows) {
  Mask m({4, 4, 4}, {1, 1, 1}, std::uint8_t{0});
  try {
    cubic_bbox(m);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("empty ROI"), std::string::npos);
  }
}

TEST(CubicBBox, RandomRoisAreContainedAndCubic) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const Dims d{static_cast<std::int64_t>(4 + rng() % 20), static_cast<std::int64_t>(4 + rng() % 20),
                 static_cast<std::int64_t>(4 + rng() % 20)};
    Mask m(d, {1, 1, 1}, std::uint8_t{0});
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
      m.at(static_cast<std::int64_t>(rng() % d.nx), static_cast<std::int64_t>(rng() % d.ny),
           static_cast<std::int64_t>(rng() % d.nz)) = 1;
    }
    const auto r = cubic_bbox(m);
    ASSERT_TRUE(r.box.within(d));
    ASSERT_TRUE(r.box.contains(tight_bbox(m)));
    if (!r.non_cubic) {
      const auto e = r.box.extent();
      ASSERT_EQ(e.x, e.y);
      ASSERT_EQ(e.y, e.z);
    }
  }
}

TEST(RfSupport, InteriorBox) {
  const BBox b{{10, 10, 10}, {13, 13, 13}};
  EXPECT_EQ(rf_support(b, {8, 8, 8}, {64, 64, 64}), (BBox{{6, 6, 6}, {17, 17, 17}}));
}

TEST(RfSupport, ClampsAtZero) {
  const BBox b{{1, 1, 1}, {2, 2, 2}};
  EXPECT_EQ(rf_support(b, {8, 8, 8}, {64, 64, 64}), (BBox{{0, 0, 0}, {6, 6, 6}}));
}

TEST(RfSupport, FullVolumeStaysFull) {
  const Dims d{9, 9, 9};
  EXPECT_EQ(rf_support(BBox::full(d), {8, 8, 8}, d), BBox::full(d));
}

TEST(RfSupport, OddPatchUsesCeilingRadius) {
  EXPECT_EQ(rf_support({{10, 10, 10}, {10, 10, 10}}, {7, 5, 1}, {64, 64, 64}),
            (BBox{{6, 7, 9}, {14, 13, 11}}));
}

TEST(RfSupport, SupersetAndMonotone) {
  std::mt19937_64 rng(3);
  const Dims d{30, 30, 30};
  for (int t = 0; t < 300; ++t) {
    Index3 lo{static_cast<std::int64_t>(rng() % 25), static_cast<std::int64_t>(rng() % 25),
              static_cast<std::int64_t>(rng() % 25)};
    Index3 hi{lo.x + static_cast<std::int64_t>(rng() % 5), lo.y + static_cast<std::int64_t>(rng() % 5),
              lo.z + static_cast<std::int64_t>(rng() % 5)};
    const BBox b{lo, hi};
    const BBox bigger{{std::max<std::int64_t>(0, lo.x - 1), lo.y, lo.z}, {hi.x, hi.y, std::min<std::int64_t>(29, hi.z + 2)}};
    const Index3 p{static_cast<std::int64_t>(1 + rng() % 9), static_cast<std::int64_t>(1 + rng() % 9),
                   static_cast<std::int64_t>(1 + rng() % 9)};
    const auto s = rf_support(b, p, d);
    ASSERT_TRUE(s.contains(b));
    ASSERT_TRUE(rf_support(bigger, p, d).contains(s));
  }
}

TEST(Crop, FullBoxIsIdentity) {
  Volume v({3, 4, 5}, {1, 2, 3});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * 0.5f;
  EXPECT_EQ(crop(v, BBox::full(v.dims())), v);
}

TEST(Crop, SingleVoxel) {
  LabelVolume v({3, 4, 5}, {1, 1, 1});
  v.at(2, 1, 3) = 77;
  const auto c = crop(v, {{2, 1, 3}, {2, 1, 3}});
  EXPECT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], 77);
}

TEST(Crop, EmbedRoundTrip) {
  std::mt19937 rng(1);
  Volume v({9, 7, 6}, {1, 1, 1});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng() % 1000);
  const BBox b{{2, 1, 1}, {6, 5, 4}};
  const auto c = crop(v, b);
  Volume back(v.dims(), v.spacing(), -1.0f);
  embed(back, c, b.min);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto p = v.dims().coord(i);
    EXPECT_EQ(back[i], b.contains(p) ? v[i] : -1.0f);
  }
  EXPECT_THROW(crop(v, {{0, 0, 0}, {9, 0, 0}}), ValidationError);
}

TEST(Vraw, RoundTripAllKinds) {
  const auto dir = temp_dir("rt");
  Volume v({4, 3, 2}, {5.0, 1.17, 1.17});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1024.0f + static_cast<float>(i) * 3.25f;
  LabelVolume l(v.dims(), v.spacing());
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::uint16_t>(i * 1000);
  Mask m(v.dims(), v.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = i % 3 == 0;
  vraw::write(dir / "v", v);
  vraw::write(dir / "l.json", l);
  vraw::write(dir / "m.raw", m);
  EXPECT_EQ(vraw::read_volume(dir / "v.raw"), v);
  EXPECT_EQ(vraw::read_labels(dir / "l"), l);
  EXPECT_EQ(vraw::read_mask(dir / "m.json"), m);
  EXPECT_EQ(fs::file_size(dir / "v.raw"), 24u * 4u);
  const auto h = vraw::read_header(dir / "v");
  EXPECT_EQ(h.doc["order"], "x-fastest-le");
  EXPECT_EQ(h.dtype, vraw::DType::F32);
}

TEST(Vraw, LittleEndianLayout) {
  const auto dir = temp_dir("le");
  LabelVolume l({2, 1, 1}, {1, 1, 1});
  l[0] = 0x0102;
  l[1] = 0x0304;
  vraw::write(dir / "l", l);
  std::ifstream in(dir / "l.raw", std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(b, (std::vector<unsigned char>{0x02, 0x01, 0x04, 0x03}));
}

TEST(Vraw, RejectsMalformedInputs) {
  const auto dir = temp_dir("bad");
  Volume v({2, 2, 2}, {1, 1, 1});
  vraw::write(dir / "v", v);
  fs::resize_file(dir / "v.raw", 31);
  EXPECT_THROW(vraw::read_volume(dir / "v"), ValidationError);
  EXPECT_THROW(vraw::read_volume(dir / "missing"), ValidationError);
  Mask m({2, 1, 1}, {1, 1, 1});
  vraw::write(dir / "m", m);
  {
    std::ofstream out(dir / "m.raw", std::ios::binary);
    out.put(0).put(2);
  }
  EXPECT_THROW(vraw::read_mask(dir / "m"), ValidationError);
  EXPECT_THROW(vraw::read_labels(dir / "v"), ValidationError);
  {
    std::ofstream out(dir / "o.json");
    out << R"({"vraw":1,"dims":[1,1,1],"spacing_mm":[1,1,1],"dtype":"f32","order":"z-fastest"})";
  }
  EXPECT_THROW(vraw::read_header(dir / "o"), ValidationError);
}

TEST(Hash, KnownDigest) {
  const std::string s = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
