#include "voxshap/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "voxshap/bytes.hpp"
#include "voxshap/hash.hpp"
#include "voxshap/vraw.hpp"

namespace voxshap {
namespace {

constexpr std::array<std::array<double, 3>, 4> kFccOffsets = {{
    {0.0, 0.0, 0.0},
    {0.5, 0.5, 0.0},
    {0.5, 0.0, 0.5},
    {0.0, 0.5, 0.5},
}};

// Renumbers ids so that the surviving ids appear as 1..M in ascending order
// of their original value.
std::uint32_t compact(std::vector<std::uint32_t>& ids) {
  std::uint32_t max_id = 0;
  for (auto id : ids) max_id = std::max(max_id, id);
  std::vector<std::uint32_t> remap(static_cast<std::size_t>(max_id) + 1, 0);
  for (auto id : ids) remap[id] = 1;
  remap[0] = 0;
  std::uint32_t next = 0;
  for (std::size_t i = 1; i < remap.size(); ++i) remap[i] = remap[i] ? ++next : 0;
  for (auto& id : ids) id = remap[id];
  return next;
}

void require_same_grid(const UnitMap& units, const LabelVolume& labels) {
  if (!(units.dims == labels.dims()) || !(units.spacing == labels.spacing())) {
    throw ValidationError("unit map and label volume grids differ");
  }
}

}  // namespace

std::string to_string(UnitKind k) {
  switch (k) {
    case UnitKind::Organs: return "organs";
    case UnitKind::Fcc: return "fcc";
    case UnitKind::Hybrid: return "hybrid";
  }
  return "?";
}

UnitKind parse_unit_kind(const std::string& s) {
  if (s == "organs") return UnitKind::Organs;
  if (s == "fcc") return UnitKind::Fcc;
  if (s == "hybrid") return UnitKind::Hybrid;
  throw ValidationError("unknown unit kind '" + s + "' (expected organs|fcc|hybrid)");
}

std::vector<std::size_t> UnitMap::counts() const {
  std::vector<std::size_t> c(static_cast<std::size_t>(num_units) + 1, 0);
  for (auto id : ids) {
    if (id > num_units) throw ValidationError("unit id exceeds num_units");
    ++c[id];
  }
  return c;
}

void UnitMap::validate() const {
  if (ids.size() != dims.count()) throw ValidationError("unit map length does not match dims");
  const auto c = counts();
  for (std::size_t j = 1; j < c.size(); ++j) {
    if (c[j] == 0) throw ValidationError("unit " + std::to_string(j) + " has no voxels");
  }
}

std::string UnitMap::content_hash() const {
  std::vector<std::uint8_t> buf;
  bytes::append_le<std::int64_t>(buf, dims.nx);
  bytes::append_le<std::int64_t>(buf, dims.ny);
  bytes::append_le<std::int64_t>(buf, dims.nz);
  bytes::append_le<std::uint32_t>(buf, num_units);
  const auto payload = bytes::encode_le<std::uint32_t>(ids);
  buf.insert(buf.end(), payload.begin(), payload.end());
  return sha256_hex(buf);
}

std::vector<std::vector<std::size_t>> unit_voxels(const UnitMap& units) {
  std::vector<std::vector<std::size_t>> out(units.num_units);
  const auto c = units.counts();
  for (std::size_t j = 1; j < c.size(); ++j) out[j - 1].reserve(c[j]);
  for (std::size_t i = 0; i < units.ids.size(); ++i) {
    if (units.ids[i] != 0) out[units.ids[i] - 1].push_back(i);
  }
  return out;
}

UnitMap partition_full_organs(const LabelVolume& labels) {
  std::vector<std::uint32_t> ids(labels.data().begin(), labels.data().end());
  UnitMap out{labels.dims(), labels.spacing(), std::move(ids), 0, UnitKind::Organs};
  out.num_units = compact(out.ids);
  if (out.num_units == 0) throw ValidationError("no organs in crop");
  return out;
}

std::vector<FccCenter> fcc_centers(const Dims& dims, const Spacing& spacing, const FccConfig& cfg) {
  const double s = cfg.scale_mm;
  if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("FCC scale_mm must be > 0");
  const double half = 0.5 * s;
  std::array<double, 3> extent{};
  std::array<std::int64_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    extent[a] = static_cast<double>(dims[a]) * spacing[a];
    lo[a] = -1;
    hi[a] = static_cast<std::int64_t>(std::ceil((extent[a] + half) / s)) + 1;
  }
  auto inside = [&](const std::array<double, 3>& p) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < -half || p[a] > extent[a] + half) return false;
    }
    return true;
  };
  std::vector<FccCenter> out;
  for (std::int64_t i = lo[0]; i <= hi[0]; ++i) {
    for (std::int64_t j = lo[1]; j <= hi[1]; ++j) {
      for (std::int64_t k = lo[2]; k <= hi[2]; ++k) {
        for (int o = 0; o < 4; ++o) {
          const std::array<double, 3> p = {
              (static_cast<double>(i) + kFccOffsets[o][0]) * s,
              (static_cast<double>(j) + kFccOffsets[o][1]) * s,
              (static_cast<double>(k) + kFccOffsets[o][2]) * s,
          };
          if (inside(p)) out.push_back({p, {i, j, k}, o});
        }
      }
    }
  }
  return out;
}

UnitMap partition_fcc(const Dims& dims, const Spacing& spacing, const FccConfig& cfg) {
  const auto centers = fcc_centers(dims, spacing, cfg);
  const double s = cfg.scale_mm;

  // Dense lookup (cell, offset) -> centre enumeration index. Padding by S/2
  // keeps every voxel's nearest lattice point inside the generated set, since
  // the FCC covering radius is S/2.
  std::array<std::int64_t, 3> cmin{}, cmax{};
  for (int a = 0; a < 3; ++a) {
    cmin[a] = std::numeric_limits<std::int64_t>::max();
    cmax[a] = std::numeric_limits<std::int64_t>::min();
  }
  for (const auto& c : centers) {
    for (int a = 0; a < 3; ++a) {
      cmin[a] = std::min(cmin[a], c.cell[a]);
      cmax[a] = std::max(cmax[a], c.cell[a]);
    }
  }
  const std::int64_t ncx = cmax[0] - cmin[0] + 1, ncy = cmax[1] - cmin[1] + 1,
                     ncz = cmax[2] - cmin[2] + 1;
  std::vector<std::int64_t> lookup(static_cast<std::size_t>(ncx * ncy * ncz * 4), -1);
  auto slot = [&](std::int64_t i, std::int64_t j, std::int64_t k, int o) -> std::int64_t {
    if (i < cmin[0] || i > cmax[0] || j < cmin[1] || j > cmax[1] || k < cmin[2] || k > cmax[2]) {
      return -1;
    }
    return (((k - cmin[2]) * ncy + (j - cmin[1])) * ncx + (i - cmin[0])) * 4 + o;
  };
  for (std::size_t n = 0; n < centers.size(); ++n) {
    const auto& c = centers[n];
    lookup[static_cast<std::size_t>(slot(c.cell[0], c.cell[1], c.cell[2], c.offset))] =
        static_cast<std::int64_t>(n);
  }

  // Candidate cells per axis: those whose points can lie within S/2 (+slack).
  auto cell_range = [&](double p) {
    const double slack = 1e-9 * s;
    return std::pair<std::int64_t, std::int64_t>{
        static_cast<std::int64_t>(std::floor((p - s - slack) / s)),
        static_cast<std::int64_t>(std::floor((p + 0.5 * s + slack) / s))};
  };

  std::vector<std::uint32_t> ids(dims.count(), 0);
  for (std::int64_t z = 0; z < dims.nz; ++z) {
    const double pz = voxel_center_mm(z, spacing.z);
    const auto rz = cell_range(pz);
    for (std::int64_t y = 0; y < dims.ny; ++y) {
      const double py = voxel_center_mm(y, spacing.y);
      const auto ry = cell_range(py);
      for (std::int64_t x = 0; x < dims.nx; ++x) {
        const double px = voxel_center_mm(x, spacing.x);
        const auto rx = cell_range(px);
        double best = std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t i = rx.first; i <= rx.second; ++i) {
          for (std::int64_t j = ry.first; j <= ry.second; ++j) {
            for (std::int64_t k = rz.first; k <= rz.second; ++k) {
              for (int o = 0; o < 4; ++o) {
                const auto sl = slot(i, j, k, o);
                if (sl < 0) continue;
                const auto idx = lookup[static_cast<std::size_t>(sl)];
                if (idx < 0) continue;
                const auto& c = centers[static_cast<std::size_t>(idx)].mm;
                const double dx = px - c[0], dy = py - c[1], dz = pz - c[2];
                const double d2 = dx * dx + dy * dy + dz * dz;
                if (d2 < best || (d2 == best && idx < best_idx)) {
                  best = d2;
                  best_idx = idx;
                }
              }
            }
          }
        }
        if (best_idx < 0) throw Error("FCC assignment found no candidate centre");
        ids[dims.index(x, y, z)] = static_cast<std::uint32_t>(best_idx) + 1;
      }
    }
  }
  UnitMap out{dims, spacing, std::move(ids), 0, UnitKind::Fcc, s};
  out.num_units = compact(out.ids);
  return out;
}

UnitMap partition_hybrid(const UnitMap& fcc, const LabelVolume& labels, const HybridOptions& opts) {
  require_same_grid(fcc, labels);
  const auto n = fcc.ids.size();

  // (fcc id, label) pairs in lexicographic order.
  std::map<std::pair<std::uint32_t, std::uint16_t>, std::uint32_t> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && fcc.ids[i] != 0) pairs.emplace(std::pair{fcc.ids[i], labels[i]}, 0);
  }
  if (pairs.empty()) throw ValidationError("no organs in crop");
  std::uint32_t next = 0;
  for (auto& [key, id] : pairs) id = ++next;

  std::vector<std::uint32_t> ids(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && fcc.ids[i] != 0) ids[i] = pairs.at({fcc.ids[i], labels[i]});
  }

  if (opts.min_fragment_voxels > 0) {
    // Unit -> organ label, and sizes.
    std::vector<std::uint16_t> organ(static_cast<std::size_t>(next) + 1, 0);
    for (const auto& [key, id] : pairs) organ[id] = key.second;
    std::vector<std::size_t> size(static_cast<std::size_t>(next) + 1, 0);
    for (auto id : ids) ++size[id];

    // Smallest fragments first; a merged fragment's voxels are relabelled in
    // place so later merges see the updated neighbourhoods.
    std::vector<std::uint32_t> order;
    for (std::uint32_t u = 1; u <= next; ++u) order.push_back(u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return size[a] < size[b]; });
    const auto& d = fcc.dims;
    const std::array<Index3, 6> nbr = {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    for (auto u : order) {
      if (size[u] == 0 || size[u] >= opts.min_fragment_voxels) continue;
      std::map<std::uint32_t, std::size_t> neighbours;
      for (std::size_t i = 0; i < n; ++i) {
        if (ids[i] != u) continue;
        const Index3 p = d.coord(i);
        for (const auto& o : nbr) {
          const Index3 q{p.x + o.x, p.y + o.y, p.z + o.z};
          if (!d.contains(q)) continue;
          const auto v = ids[d.index(q)];
          if (v != 0 && v != u && organ[v] == organ[u]) neighbours[v] = size[v];
        }
      }
      if (neighbours.empty()) continue;
      std::uint32_t target = 0;
      std::size_t best = 0;
      for (const auto& [v, sz] : neighbours) {
        if (sz > best) {
          best = sz;
          target = v;
        }
      }
      for (auto& id : ids) {
        if (id == u) id = target;
      }
      size[target] += size[u];
      size[u] = 0;
    }
  }

  UnitMap out{fcc.dims, fcc.spacing, std::move(ids), 0, UnitKind::Hybrid, fcc.scale_mm,
              opts.min_fragment_voxels};
  out.num_units = compact(out.ids);
  return out;
}

void write_unit_map(const std::filesystem::path& p, const UnitMap& units, const nlohmann::json& extra) {
  units.validate();
  nlohmann::json doc = extra.is_object() ? extra : nlohmann::json::object();
  doc["units"] = {{"kind", to_string(units.kind)},
                  {"scale_mm", units.scale_mm},
                  {"num_units", units.num_units},
                  {"min_fragment", units.min_fragment},
                  {"content_hash", units.content_hash()}};
  const auto dtype = units.num_units > 65535 ? vraw::DType::U32 : vraw::DType::U16;
  vraw::write_u32(p, units.dims, units.spacing, units.ids, dtype, doc);
}

UnitMap read_unit_map(const std::filesystem::path& p) {
  vraw::Header h;
  UnitMap u;
  u.ids = vraw::read_u32(p, &h);
  u.dims = h.dims;
  u.spacing = h.spacing;
  try {
    const auto& meta = h.doc.at("units");
    u.kind = parse_unit_kind(meta.at("kind").get<std::string>());
    u.num_units = meta.at("num_units").get<std::uint32_t>();
    u.scale_mm = meta.value("scale_mm", 0.0);
    u.min_fragment = meta.value("min_fragment", std::uint32_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(vraw::resolve(p).sidecar.string() + ": missing or malformed units block: " + e.what());
  }
  try {
    u.validate();
  } catch (...) {
    rethrow_with_context(vraw::resolve(p).sidecar.string() + ": ");
  }
  return u;
}

}  // namespace voxshap
