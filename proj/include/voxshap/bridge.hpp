#pragma once

// Engine side of the out-of-process predictor protocol: length-prefixed
// frames over the child's stdio, a JSON hello, then strictly alternating
// tensor request / tensor response frames.

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxshap/infer.hpp"

namespace voxshap::bridge {

inline constexpr const char* kProtocolVersion = "voxshap-predictor/1";
inline constexpr std::size_t kMaxPayload = std::size_t{256} << 20;

enum class FrameTag : std::uint8_t { Tensor = 0, Json = 1 };

struct Frame {
  FrameTag tag = FrameTag::Tensor;
  std::vector<std::uint8_t> body;  // payload after the tag byte
};

// u32 LE length of (tag + body), tag byte, body.
std::vector<std::uint8_t> encode_frame(const Frame& f);

// Decodes exactly one frame from `bytes`; `consumed` receives its size.
// Truncation, oversize and unknown tags throw ProtocolError naming the byte
// offset.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

Frame tensor_frame(std::span<const float> values);
Frame json_frame(const nlohmann::json& j);
std::vector<float> tensor_values(const Frame& f);
nlohmann::json json_value(const Frame& f);

struct Hello {
  std::string protocol;
  int num_classes = 0;
  Index3 patch_size;
  bool supports_concurrency = false;
};

// Parses and validates a hello against the expected patch and class count.
Hello parse_hello(const nlohmann::json& j, const Index3& expected_patch, int expected_classes);
nlohmann::json to_json(const Hello& h);

struct ExecOptions {
  std::string command;  // run through /bin/sh -c
  Index3 patch_size;
  int num_classes = 2;
  std::chrono::milliseconds timeout{30000};
};

// Launches `command --patch px,py,pz --classes C` and speaks the protocol
// over its stdin/stdout. Requests are single-flight.
class ExecPredictor final : public PatchPredictor {
 public:
  explicit ExecPredictor(ExecOptions opts);
  ~ExecPredictor() override;

  ExecPredictor(const ExecPredictor&) = delete;
  ExecPredictor& operator=(const ExecPredictor&) = delete;

  int num_classes() const override { return opts_.num_classes; }
  std::optional<Index3> patch_size() const override { return opts_.patch_size; }
  bool supports_concurrency() const override { return false; }
  std::string identity() const override;
  std::vector<float> predict(std::span<const float> patch, const Index3& shape) override;

  const Hello& hello() const { return hello_; }
  std::size_t calls() const { return calls_; }

 private:
  void write_all(const std::vector<std::uint8_t>& bytes);
  void read_exact(std::uint8_t* dst, std::size_t n);
  Frame read_frame();
  [[noreturn]] void fail(const std::string& what);
  void note(const std::string& line);
  void shutdown();

  ExecOptions opts_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::size_t bytes_read_ = 0;
  std::size_t calls_ = 0;
  Hello hello_;
  std::deque<std::string> transcript_;
};

}  // namespace voxshap::bridge
