#include "voxshap/vraw.hpp"

#include <fstream>
#include <limits>

#include "voxshap/bytes.hpp"
#include "voxshap/error.hpp"

namespace voxshap::vraw {
namespace fs = std::filesystem;

std::string dtype_name(DType t) {
  switch (t) {
    case DType::F32: return "f32";
    case DType::U16: return "u16";
    case DType::U8: return "u8";
    case DType::U32: return "u32";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32:
    case DType::U32: return 4;
    case DType::U16: return 2;
    case DType::U8: return 1;
  }
  return 0;
}

namespace {

DType parse_dtype(const std::string& s, const fs::path& where) {
  if (s == "f32") return DType::F32;
  if (s == "u16") return DType::U16;
  if (s == "u8") return DType::U8;
  if (s == "u32") return DType::U32;
  throw ValidationError(where.string() + ": unsupported dtype '" + s + "'");
}

std::vector<std::uint8_t> read_payload(const Header& h, const Paths& paths) {
  std::ifstream in(paths.data, std::ios::binary | std::ios::ate);
  if (!in) throw ValidationError("cannot open raster data " + paths.data.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = h.dims.count() * dtype_size(h.dtype);
  if (size != expected) {
    throw ValidationError(paths.data.string() + ": expected " + std::to_string(expected) +
                          " bytes for " + to_string(h.dims) + " " + dtype_name(h.dtype) +
                          ", found " + std::to_string(size));
  }
  std::vector<std::uint8_t> raw(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
  if (!in) throw ValidationError("short read on " + paths.data.string());
  return raw;
}

void write_files(const fs::path& p, const Dims& dims, const Spacing& sp, DType dtype,
                 const std::vector<std::uint8_t>& payload, const nlohmann::json& extra) {
  const Paths paths = resolve(p);
  nlohmann::json doc = {
      {"vraw", 1},
      {"dims", {dims.nx, dims.ny, dims.nz}},
      {"spacing_mm", {sp.x, sp.y, sp.z}},
      {"dtype", dtype_name(dtype)},
      {"order", "x-fastest-le"},
  };
  if (extra.is_object()) doc.update(extra);
  if (paths.sidecar.has_parent_path()) fs::create_directories(paths.sidecar.parent_path());
  {
    std::ofstream out(paths.sidecar);
    if (!out) throw ValidationError("cannot write " + paths.sidecar.string());
    out << doc.dump(2) << '\n';
  }
  std::ofstream out(paths.data, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + paths.data.string());
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw ValidationError("short write on " + paths.data.string());
}

}  // namespace

Paths resolve(const fs::path& p) {
  fs::path stem = p;
  const auto ext = p.extension().string();
  if (ext == ".json" || ext == ".raw") stem.replace_extension();
  return {fs::path(stem.string() + ".json"), fs::path(stem.string() + ".raw")};
}

Header read_header(const fs::path& p) {
  const Paths paths = resolve(p);
  std::ifstream in(paths.sidecar);
  if (!in) throw ValidationError("cannot open raster sidecar " + paths.sidecar.string());
  Header h;
  try {
    in >> h.doc;
    if (h.doc.at("vraw").get<int>() != 1) throw ValidationError("unsupported vraw version");
    const auto order = h.doc.value("order", std::string("x-fastest-le"));
    if (order != "x-fastest-le") throw ValidationError("unsupported voxel order '" + order + "'");
    const auto d = h.doc.at("dims").get<std::vector<std::int64_t>>();
    const auto s = h.doc.at("spacing_mm").get<std::vector<double>>();
    if (d.size() != 3 || s.size() != 3) throw ValidationError("dims/spacing_mm must have 3 entries");
    h.dims = {d[0], d[1], d[2]};
    h.spacing = {s[0], s[1], s[2]};
    h.dtype = parse_dtype(h.doc.at("dtype").get<std::string>(), paths.sidecar);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(paths.sidecar.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(paths.sidecar.string() + ": " + e.what());
  }
  if (h.dims.nx < 1 || h.dims.ny < 1 || h.dims.nz < 1) {
    throw ValidationError(paths.sidecar.string() + ": dims must be >= 1");
  }
  if (!(h.spacing.x > 0 && h.spacing.y > 0 && h.spacing.z > 0)) {
    throw ValidationError(paths.sidecar.string() + ": spacing_mm must be > 0");
  }
  return h;
}

Volume read_volume(const fs::path& p) {
  const Header h = read_header(p);
  if (h.dtype != DType::F32) {
    throw ValidationError(resolve(p).sidecar.string() + ": volume must be f32");
  }
  const auto raw = read_payload(h, resolve(p));
  return Volume(h.dims, h.spacing, bytes::decode_le<float>(raw));
}

LabelVolume read_labels(const fs::path& p) {
  const Header h = read_header(p);
  const auto raw = read_payload(h, resolve(p));
  if (h.dtype == DType::U16) return LabelVolume(h.dims, h.spacing, bytes::decode_le<std::uint16_t>(raw));
  if (h.dtype == DType::U8) return LabelVolume(h.dims, h.spacing, std::vector<std::uint16_t>(raw.begin(), raw.end()));
  throw ValidationError(resolve(p).sidecar.string() + ": label map must be u16 or u8");
}

Mask read_mask(const fs::path& p) {
  const Header h = read_header(p);
  if (h.dtype != DType::U8) throw ValidationError(resolve(p).sidecar.string() + ": mask must be u8");
  auto raw = read_payload(h, resolve(p));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] > 1) {
      throw ValidationError(resolve(p).data.string() + ": mask value " + std::to_string(raw[i]) +
                            " at element " + std::to_string(i) + " is not 0/1");
    }
  }
  return Mask(h.dims, h.spacing, std::move(raw));
}

std::vector<std::uint32_t> read_u32(const fs::path& p, Header* header) {
  Header h = read_header(p);
  const auto raw = read_payload(h, resolve(p));
  std::vector<std::uint32_t> out;
  switch (h.dtype) {
    case DType::U32: out = bytes::decode_le<std::uint32_t>(raw); break;
    case DType::U16: {
      const auto v = bytes::decode_le<std::uint16_t>(raw);
      out.assign(v.begin(), v.end());
      break;
    }
    case DType::U8: out.assign(raw.begin(), raw.end()); break;
    case DType::F32: throw ValidationError(resolve(p).sidecar.string() + ": expected integer dtype");
  }
  if (header) *header = std::move(h);
  return out;
}

void write(const fs::path& p, const Volume& v, const nlohmann::json& extra) {
  write_files(p, v.dims(), v.spacing(), DType::F32, bytes::encode_le<float>(v.data()), extra);
}

void write(const fs::path& p, const LabelVolume& v, const nlohmann::json& extra) {
  write_files(p, v.dims(), v.spacing(), DType::U16, bytes::encode_le<std::uint16_t>(v.data()), extra);
}

void write(const fs::path& p, const Mask& v, const nlohmann::json& extra) {
  write_files(p, v.dims(), v.spacing(), DType::U8,
              std::vector<std::uint8_t>(v.data().begin(), v.data().end()), extra);
}

void write_u32(const fs::path& p, const Dims& dims, const Spacing& spacing,
               const std::vector<std::uint32_t>& data, DType dtype, const nlohmann::json& extra) {
  if (data.size() != dims.count()) throw ValidationError("write_u32: data length mismatch");
  std::vector<std::uint8_t> payload;
  switch (dtype) {
    case DType::U32: payload = bytes::encode_le<std::uint32_t>(data); break;
    case DType::U16: {
      std::vector<std::uint16_t> narrow(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i] > std::numeric_limits<std::uint16_t>::max()) {
          throw ValidationError("write_u32: value does not fit u16");
        }
        narrow[i] = static_cast<std::uint16_t>(data[i]);
      }
      payload = bytes::encode_le<std::uint16_t>(narrow);
      break;
    }
    default: throw ValidationError("write_u32: dtype must be u16 or u32");
  }
  write_files(p, dims, spacing, dtype, payload, extra);
}

}  // namespace voxshap::vraw
