#pragma once

// VRAW/1 raster container: a JSON sidecar describing the grid plus a
// headerless little-endian x-fastest binary payload.
//
//   foo.json  {"vraw": 1, "dims": [nx,ny,nz], "spacing_mm": [sx,sy,sz],
//              "dtype": "f32"|"u16"|"u8"|"u32", "order": "x-fastest-le", ...}
//   foo.raw   nx*ny*nz elements
//
// Any of "foo", "foo.json" or "foo.raw" names the same container.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voxshap/grid.hpp"

namespace voxshap::vraw {

enum class DType { F32, U16, U8, U32 };

std::string dtype_name(DType t);
std::size_t dtype_size(DType t);

struct Paths {
  std::filesystem::path sidecar;
  std::filesystem::path data;
};
Paths resolve(const std::filesystem::path& p);

struct Header {
  Dims dims;
  Spacing spacing;
  DType dtype = DType::F32;
  // Full sidecar document, including extension keys.
  nlohmann::json doc;
};

Header read_header(const std::filesystem::path& p);

Volume read_volume(const std::filesystem::path& p);
// Accepts u8 or u16 payloads.
LabelVolume read_labels(const std::filesystem::path& p);
// u8 payload restricted to 0/1.
Mask read_mask(const std::filesystem::path& p);
// u8, u16 or u32 payload widened to u32, plus the header for extension keys.
std::vector<std::uint32_t> read_u32(const std::filesystem::path& p, Header* header = nullptr);

// `extra` keys are merged into the sidecar document.
void write(const std::filesystem::path& p, const Volume& v, const nlohmann::json& extra = {});
void write(const std::filesystem::path& p, const LabelVolume& v, const nlohmann::json& extra = {});
void write(const std::filesystem::path& p, const Mask& v, const nlohmann::json& extra = {});
void write_u32(const std::filesystem::path& p, const Dims& dims, const Spacing& spacing,
               const std::vector<std::uint32_t>& data, DType dtype,
               const nlohmann::json& extra = {});

}  // namespace voxshap::vraw
