#include <gtest/gtest.h>

#include <chrono>
#include <cstring>
#include <random>

#include "voxshap/bridge.hpp"

using namespace voxshap;
using namespace voxshap::bridge;

namespace {

const std::string kAdapter = VOXSHAP_FAKE_ADAPTER;

ExecOptions options(const std::string& mode, Index3 patch = {4, 3, 2}, int classes = 2) {
  ExecOptions o;
  o.command = kAdapter + " --mode " + mode + " --threshold 25 --gain 0.02";
  o.patch_size = patch;
  o.num_classes = classes;
  o.timeout = std::chrono::milliseconds(3000);
  return o;
}

std::vector<float> random_patch(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1024.0f, 1024.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::string protocol_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const ProtocolError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Frames, TensorRoundTripIsBitExact) {
  std::vector<float> v{0.0f, -0.0f, 1.5f, -3.25e-30f, 7.0e30f, std::numeric_limits<float>::denorm_min(),
                       std::numeric_limits<float>::infinity()};
  const auto bytes = encode_frame(tensor_frame(v));
  ASSERT_EQ(bytes.size(), 5 + 4 * v.size());
  EXPECT_EQ(bytes[0], static_cast<std::uint8_t>(1 + 4 * v.size()));
  EXPECT_EQ(bytes[4], 0);
  std::size_t used = 0;
  const auto back = tensor_values(decode_frame(bytes, &used));
  EXPECT_EQ(used, bytes.size());
  ASSERT_EQ(back.size(), v.size());
  EXPECT_EQ(std::memcmp(back.data(), v.data(), 4 * v.size()), 0);
}

TEST(Frames, LittleEndianLayout) {
  const std::vector<float> one{1.0f};  // 0x3f800000
  const auto bytes = encode_frame(tensor_frame(one));
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{5, 0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f}));
}

TEST(Frames, JsonRoundTrip) {
  const nlohmann::json j = {{"a", 1}, {"b", {1, 2, 3}}};
  const auto f = decode_frame(encode_frame(json_frame(j)));
  EXPECT_EQ(f.tag, FrameTag::Json);
  EXPECT_EQ(json_value(f), j);
  Frame bad{FrameTag::Json, {'{', 'x'}};
  EXPECT_THROW(json_value(bad), ProtocolError);
  EXPECT_THROW(tensor_values(bad), ProtocolError);
}

TEST(Frames, TruncationNamesByteOffset) {
  const auto bytes = encode_frame(tensor_frame(std::vector<float>{1, 2, 3}));
  const std::vector<std::uint8_t> head(bytes.begin(), bytes.begin() + 3);
  EXPECT_NE(protocol_error([&] { decode_frame(head); }).find("byte offset 3"), std::string::npos);
  const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + 9);
  EXPECT_NE(protocol_error([&] { decode_frame(part); }).find("byte offset 9"), std::string::npos);
  auto tagged = bytes;
  tagged[4] = 9;
  EXPECT_NE(protocol_error([&] { decode_frame(tagged); }).find("unknown frame tag"), std::string::npos);
  std::vector<std::uint8_t> huge{0xff, 0xff, 0xff, 0x7f, 0};
  EXPECT_THROW(decode_frame(huge), ProtocolError);
  std::vector<std::uint8_t> empty{0, 0, 0, 0};
  EXPECT_THROW(decode_frame(empty), ProtocolError);
}

TEST(Hello, Validation) {
  Hello h{kProtocolVersion, 2, {8, 8, 8}, false};
  const auto j = to_json(h);
  const auto back = parse_hello(j, {8, 8, 8}, 2);
  EXPECT_EQ(back.protocol, kProtocolVersion);
  EXPECT_EQ(back.patch_size, (Index3{8, 8, 8}));
  auto wrong = j;
  wrong["protocol"] = "voxshap-predictor/2";
  EXPECT_THROW(parse_hello(wrong, {8, 8, 8}, 2), ProtocolError);
  EXPECT_THROW(parse_hello(j, {8, 8, 4}, 2), ProtocolError);
  EXPECT_THROW(parse_hello(j, {8, 8, 8}, 3), ProtocolError);
  EXPECT_THROW(parse_hello(nlohmann::json{{"protocol", kProtocolVersion}}, {8, 8, 8}, 2), ProtocolError);
}

TEST(Exec, MatchesInProcessSyntheticPredictor) {
  ExecPredictor exec(options("ok"));
  EXPECT_EQ(exec.hello().protocol, kProtocolVersion);
  EXPECT_FALSE(exec.supports_concurrency());
  auto local = SyntheticPredictor::threshold(25.0, 0.02);
  std::mt19937_64 rng(1);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_patch(24, rng);
    const auto a = exec.predict(p, {4, 3, 2});
    const auto b = local.predict(p, {4, 3, 2});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  }
  EXPECT_LE(worst, 1e-6);
  EXPECT_EQ(exec.calls(), 100u);
  EXPECT_NE(exec.identity().find("classes=2"), std::string::npos);
}

TEST(Exec, StrayOutputBeforeHelloIsRejected) {
  EXPECT_THROW(ExecPredictor(options("noise")), ProtocolError);
}

TEST(Exec, HandshakeMismatchesAreProtocolErrors) {
  const auto v = protocol_error([] { ExecPredictor p(options("bad-version")); });
  EXPECT_NE(v.find("protocol"), std::string::npos) << v;
  EXPECT_NE(v.find("transcript tail"), std::string::npos) << v;
  EXPECT_THROW(ExecPredictor(options("bad-patch")), ProtocolError);
  EXPECT_THROW(ExecPredictor(options("bad-classes")), ProtocolError);
}

TEST(Exec, ResponseFailuresAreProtocolErrors) {
  std::mt19937_64 rng(2);
  const auto p = random_patch(24, rng);
  for (const std::string mode : {"error", "exit", "truncate", "wrong-length", "bad-tag"}) {
    ExecPredictor exec(options(mode));
    const auto msg = protocol_error([&] { exec.predict(p, {4, 3, 2}); });
    EXPECT_FALSE(msg.empty()) << mode;
    if (mode == "error") EXPECT_NE(msg.find("error frame"), std::string::npos) << msg;
    if (mode == "exit") EXPECT_NE(msg.find("status 3"), std::string::npos) << msg;
    if (mode == "truncate") EXPECT_NE(msg.find("byte offset"), std::string::npos) << msg;
    if (mode == "wrong-length") EXPECT_NE(msg.find("wrong response length"), std::string::npos) << msg;
  }
}

TEST(Exec, TimeoutIsProtocolError) {
  auto o = options("slow");
  o.timeout = std::chrono::milliseconds(200);
  ExecPredictor exec(o);
  std::vector<float> p(24, 0.0f);
  const auto start = std::chrono::steady_clock::now();
  const auto msg = protocol_error([&] { exec.predict(p, {4, 3, 2}); });
  EXPECT_NE(msg.find("timeout"), std::string::npos) << msg;
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(4));
}

TEST(Exec, ShapeMismatchAndMissingCommand) {
  ExecPredictor exec(options("ok"));
  std::vector<float> p(8, 0.0f);
  EXPECT_THROW(exec.predict(p, {2, 2, 2}), ValidationError);
  EXPECT_THROW(ExecPredictor(ExecOptions{}), ValidationError);
  auto o = options("ok");
  o.command = "/nonexistent/adapter";
  EXPECT_THROW(ExecPredictor{o}, ProtocolError);
}
