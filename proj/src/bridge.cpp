#include "voxshap/bridge.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "voxshap/bytes.hpp"
#include "voxshap/error.hpp"

extern char** environ;

namespace voxshap::bridge {

using bytes::append_le;
using bytes::load_le;

std::vector<std::uint8_t> encode_frame(const Frame& f) {
  const std::size_t payload = f.body.size() + 1;
  if (payload > kMaxPayload) throw ProtocolError("frame payload exceeds 256 MiB");
  std::vector<std::uint8_t> out;
  out.reserve(4 + payload);
  append_le(out, static_cast<std::uint32_t>(payload));
  out.push_back(static_cast<std::uint8_t>(f.tag));
  out.insert(out.end(), f.body.begin(), f.body.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  if (bytes.size() < 4) {
    throw ProtocolError("truncated frame header at byte offset " + std::to_string(bytes.size()) +
                        " (need 4 bytes)");
  }
  const auto len = load_le<std::uint32_t>(bytes.data());
  if (len == 0) throw ProtocolError("empty frame payload at byte offset 4");
  if (len > kMaxPayload) {
    throw ProtocolError("frame length " + std::to_string(len) + " exceeds 256 MiB at byte offset 0");
  }
  if (bytes.size() < 4 + static_cast<std::size_t>(len)) {
    throw ProtocolError("truncated frame at byte offset " + std::to_string(bytes.size()) + " (expected " +
                        std::to_string(4 + static_cast<std::size_t>(len)) + " bytes)");
  }
  const auto tag = bytes[4];
  if (tag > 1) throw ProtocolError("unknown frame tag " + std::to_string(tag) + " at byte offset 4");
  Frame f{static_cast<FrameTag>(tag), {bytes.begin() + 5, bytes.begin() + 4 + len}};
  if (consumed) *consumed = 4 + static_cast<std::size_t>(len);
  return f;
}

Frame tensor_frame(std::span<const float> values) {
  Frame f;
  f.tag = FrameTag::Tensor;
  f.body.reserve(values.size() * 4);
  for (float v : values) append_le(f.body, v);
  return f;
}

Frame json_frame(const nlohmann::json& j) {
  const auto s = j.dump();
  return {FrameTag::Json, {s.begin(), s.end()}};
}

std::vector<float> tensor_values(const Frame& f) {
  if (f.tag != FrameTag::Tensor) throw ProtocolError("expected a tensor frame");
  if (f.body.size() % 4 != 0) {
    throw ProtocolError("tensor payload of " + std::to_string(f.body.size()) + " bytes is not a multiple of 4");
  }
  std::vector<float> out(f.body.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<float>(f.body.data() + 4 * i);
  return out;
}

nlohmann::json json_value(const Frame& f) {
  if (f.tag != FrameTag::Json) throw ProtocolError("expected a JSON frame");
  try {
    return nlohmann::json::parse(f.body.begin(), f.body.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON frame: ") + e.what());
  }
}

Hello parse_hello(const nlohmann::json& j, const Index3& expected_patch, int expected_classes) {
  Hello h;
  try {
    h.protocol = j.at("protocol").get<std::string>();
    if (h.protocol != kProtocolVersion) {
      throw ProtocolError("protocol version mismatch: adapter speaks '" + h.protocol + "', engine expects '" +
                          kProtocolVersion + "'");
    }
    h.num_classes = j.at("num_classes").get<int>();
    const auto ps = j.at("patch_size").get<std::vector<std::int64_t>>();
    if (ps.size() != 3) throw ProtocolError("hello patch_size must have 3 entries");
    h.patch_size = {ps[0], ps[1], ps[2]};
    h.supports_concurrency = j.value("supports_concurrency", false);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed hello: ") + e.what());
  }
  if (h.num_classes != expected_classes) {
    throw ProtocolError("hello num_classes " + std::to_string(h.num_classes) + " differs from configured " +
                        std::to_string(expected_classes));
  }
  if (h.patch_size != expected_patch) {
    throw ProtocolError("hello patch_size " + to_string(h.patch_size) + " differs from configured " +
                        to_string(expected_patch));
  }
  return h;
}

nlohmann::json to_json(const Hello& h) {
  return {{"protocol", h.protocol},
          {"num_classes", h.num_classes},
          {"patch_size", {h.patch_size.x, h.patch_size.y, h.patch_size.z}},
          {"supports_concurrency", h.supports_concurrency}};
}

ExecPredictor::ExecPredictor(ExecOptions opts) : opts_(std::move(opts)) {
  if (opts_.command.empty()) throw ValidationError("exec predictor: empty command");
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0) throw ProtocolError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw ProtocolError(std::string("pipe: ") + std::strerror(errno));
  }
  fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);

  const auto& p = opts_.patch_size;
  const std::string full = opts_.command + " --patch " + std::to_string(p.x) + "," + std::to_string(p.y) + "," +
                           std::to_string(p.z) + " --classes " + std::to_string(opts_.num_classes);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&fa, out_pipe[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&fa, in_pipe[0]);
  posix_spawn_file_actions_addclose(&fa, out_pipe[1]);
  std::string sh = "/bin/sh", dash_c = "-c";
  char* argv[] = {sh.data(), dash_c.data(), const_cast<char*>(full.c_str()), nullptr};
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, "/bin/sh", &fa, nullptr, argv, environ);
  posix_spawn_file_actions_destroy(&fa);
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (rc != 0) {
    shutdown();
    throw ProtocolError("failed to launch predictor '" + full + "': " + std::strerror(rc));
  }
  pid_ = pid;
  note("launch: " + full);

  const Frame f = read_frame();
  if (f.tag != FrameTag::Json) fail("first frame must be a JSON hello");
  nlohmann::json j;
  try {
    j = json_value(f);
    if (j.contains("error")) fail("adapter error during handshake: " + j["error"].dump());
    hello_ = parse_hello(j, opts_.patch_size, opts_.num_classes);
  } catch (const ProtocolError& e) {
    fail(e.what());
  }
  note("hello: " + j.dump());
}

ExecPredictor::~ExecPredictor() { shutdown(); }

void ExecPredictor::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  to_child_ = -1;
  if (from_child_ >= 0) close(from_child_);
  from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks the adapter to exit; give it a moment, then kill.
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(10000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ExecPredictor::identity() const {
  return "exec:" + opts_.command + "|classes=" + std::to_string(opts_.num_classes) + "|patch=" +
         to_string(opts_.patch_size);
}

void ExecPredictor::note(const std::string& line) {
  transcript_.push_back(line.size() > 200 ? line.substr(0, 200) + "..." : line);
  while (transcript_.size() > 8) transcript_.pop_front();
}

void ExecPredictor::fail(const std::string& what) {
  std::string msg = "predictor bridge: " + what + "\ntranscript tail:";
  for (const auto& t : transcript_) msg += "\n  " + t;
  shutdown();
  throw ProtocolError(msg);
}

void ExecPredictor::write_all(const std::vector<std::uint8_t>& bytes) {
  if (to_child_ < 0) fail("adapter is not running");
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = write(to_child_, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("write to adapter failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

void ExecPredictor::read_exact(std::uint8_t* dst, std::size_t n) {
  if (from_child_ < 0) fail("adapter is not running");
  const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
  std::size_t got = 0;
  while (got < n) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) fail("timeout after " + std::to_string(opts_.timeout.count()) + " ms at byte offset " +
                                std::to_string(bytes_read_));
    pollfd pfd{from_child_, POLLIN, 0};
    const int pr = poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (pr == 0) continue;
    const auto r = read(from_child_, dst + got, n - got);
    if (r < 0) {
      if (errno == EINTR) continue;
      fail(std::string("read from adapter failed: ") + std::strerror(errno));
    }
    if (r == 0) {
      int status = 0;
      std::string how = "adapter closed its output";
      if (pid_ > 0 && waitpid(pid_, &status, 0) == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) how = "adapter exited with status " + std::to_string(WEXITSTATUS(status));
        else if (WIFSIGNALED(status)) how = "adapter killed by signal " + std::to_string(WTERMSIG(status));
      }
      fail(how + "; truncated frame at byte offset " + std::to_string(bytes_read_));
    }
    got += static_cast<std::size_t>(r);
    bytes_read_ += static_cast<std::size_t>(r);
  }
}

Frame ExecPredictor::read_frame() {
  std::uint8_t head[4];
  read_exact(head, 4);
  const auto len = load_le<std::uint32_t>(head);
  if (len == 0 || len > kMaxPayload) {
    fail("invalid frame length " + std::to_string(len) + " at byte offset " + std::to_string(bytes_read_ - 4));
  }
  std::vector<std::uint8_t> buf(4 + len);
  std::copy(head, head + 4, buf.begin());
  read_exact(buf.data() + 4, len);
  try {
    return decode_frame(buf);
  } catch (const ProtocolError& e) {
    fail(e.what());
  }
}

std::vector<float> ExecPredictor::predict(std::span<const float> patch, const Index3& shape) {
  if (shape != opts_.patch_size) {
    throw ValidationError("exec predictor: patch shape " + to_string(shape) + " differs from configured " +
                          to_string(opts_.patch_size));
  }
  ++calls_;
  write_all(encode_frame(tensor_frame(patch)));
  note("request #" + std::to_string(calls_) + ": " + std::to_string(patch.size()) + " floats");
  const Frame f = read_frame();
  if (f.tag == FrameTag::Json) {
    nlohmann::json j;
    try {
      j = json_value(f);
    } catch (const ProtocolError& e) {
      fail(e.what());
    }
    note("response: " + j.dump());
    fail("adapter returned an error frame: " + (j.contains("error") ? j["error"].dump() : j.dump()));
  }
  auto values = tensor_values(f);
  note("response #" + std::to_string(calls_) + ": " + std::to_string(values.size()) + " floats");
  const auto expected = static_cast<std::size_t>(opts_.num_classes) * patch.size();
  if (values.size() != expected) {
    fail("wrong response length: " + std::to_string(values.size()) + " floats, expected " +
         std::to_string(expected));
  }
  return values;
}

}  // namespace voxshap::bridge
