#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace voxshap {

// Hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

template <typename T>
std::string sha256_of(std::span<const T> values) {
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()});
}

}  // namespace voxshap
