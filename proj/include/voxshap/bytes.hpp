#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

namespace voxshap::bytes {

// Little-endian (de)serialization of trivially copyable scalars.
template <typename T>
  requires std::is_trivially_copyable_v<T>
void store_le(T value, std::uint8_t* out) {
  std::memcpy(out, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(out[i], out[sizeof(T) - 1 - i]);
  }
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
T load_le(const std::uint8_t* in) {
  T value;
  if constexpr (std::endian::native == std::endian::big) {
    std::uint8_t tmp[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = in[sizeof(T) - 1 - i];
    std::memcpy(&value, tmp, sizeof(T));
  } else {
    std::memcpy(&value, in, sizeof(T));
  }
  return value;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& buf, T value) {
  const auto off = buf.size();
  buf.resize(off + sizeof(T));
  store_le(value, buf.data() + off);
}

template <typename T>
std::vector<std::uint8_t> encode_le(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) store_le(values[i], out.data() + i * sizeof(T));
  }
  return out;
}

template <typename T>
std::vector<T> decode_le(std::span<const std::uint8_t> raw) {
  std::vector<T> out(raw.size() / sizeof(T));
  if constexpr (std::endian::native == std::endian::little) {
    if (!out.empty()) std::memcpy(out.data(), raw.data(), out.size() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<T>(raw.data() + i * sizeof(T));
  }
  return out;
}

}  // namespace voxshap::bytes
