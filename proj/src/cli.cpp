#include "voxshap/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "voxshap/bridge.hpp"
#include "voxshap/cache.hpp"
#include "voxshap/curves.hpp"
#include "voxshap/error.hpp"
#include "voxshap/hash.hpp"
#include "voxshap/parallel.hpp"
#include "voxshap/pipeline.hpp"
#include "voxshap/shap.hpp"
#include "voxshap/vraw.hpp"

namespace voxshap::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Index3 parse_patch(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw ValidationError("--patch expects PX,PY,PZ, got '" + s + "'");
  Index3 p;
  for (int a = 0; a < 3; ++a) {
    try {
      p[a] = std::stoll(parts[static_cast<std::size_t>(a)]);
    } catch (const std::exception&) {
      throw ValidationError("--patch component '" + parts[static_cast<std::size_t>(a)] + "' is not an integer");
    }
    if (p[a] < 1) throw ValidationError("--patch components must be >= 1");
  }
  return p;
}

std::vector<std::size_t> parse_budgets(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : split(s, ',')) {
    try {
      out.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw ValidationError("budget '" + part + "' is not a non-negative integer");
    }
  }
  return out;
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"volume", c.volume},
          {"labels", c.labels},
          {"roi", c.roi},
          {"out", c.out},
          {"unit_map", c.unit_map},
          {"attribution", c.attribution},
          {"units", c.units},
          {"scale_mm", c.scale_mm},
          {"min_fragment", c.min_fragment},
          {"score", c.score},
          {"target_class", c.target_class},
          {"dice_epsilon", c.dice_epsilon},
          {"budget", c.budget},
          {"budgets", c.budgets},
          {"seed", c.seed},
          {"holdout", c.holdout},
          {"ridge", c.ridge},
          {"l1_threshold", c.l1_threshold},
          {"exact", c.exact},
          {"patch", {c.patch.x, c.patch.y, c.patch.z}},
          {"overlap", c.overlap},
          {"sigma_scale", c.sigma_scale},
          {"baseline_hu", c.baseline_hu},
          {"k_max", c.k_max},
          {"predictor", c.predictor},
          {"num_classes", c.num_classes},
          {"synthetic_threshold", c.synthetic_threshold},
          {"synthetic_gain", c.synthetic_gain},
          {"timeout_ms", c.timeout_ms},
          {"workers", c.workers},
          {"spill", c.spill}};
}

void merge_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> k;
    const json defaults = to_json(RunConfig{});
    for (const auto& [key, _] : defaults.items()) k.insert(key);
    return k;
  }();
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  try {
    take(j, "volume", c.volume);
    take(j, "labels", c.labels);
    take(j, "roi", c.roi);
    take(j, "out", c.out);
    take(j, "unit_map", c.unit_map);
    take(j, "attribution", c.attribution);
    take(j, "units", c.units);
    take(j, "scale_mm", c.scale_mm);
    take(j, "min_fragment", c.min_fragment);
    if (j.contains("score")) {
      const auto& s = j.at("score");
      c.score = s.is_string() ? split(s.get<std::string>(), ',') : s.get<std::vector<std::string>>();
    }
    take(j, "target_class", c.target_class);
    take(j, "dice_epsilon", c.dice_epsilon);
    take(j, "budget", c.budget);
    if (j.contains("budgets")) {
      const auto& b = j.at("budgets");
      c.budgets = b.is_string() ? parse_budgets(b.get<std::string>()) : b.get<std::vector<std::size_t>>();
    }
    take(j, "seed", c.seed);
    take(j, "holdout", c.holdout);
    take(j, "ridge", c.ridge);
    take(j, "l1_threshold", c.l1_threshold);
    take(j, "exact", c.exact);
    if (j.contains("patch")) {
      const auto& p = j.at("patch");
      if (p.is_string()) {
        c.patch = parse_patch(p.get<std::string>());
      } else {
        const auto v = p.get<std::vector<std::int64_t>>();
        if (v.size() != 3) throw ValidationError("patch must have 3 entries");
        c.patch = {v[0], v[1], v[2]};
      }
    }
    take(j, "overlap", c.overlap);
    take(j, "sigma_scale", c.sigma_scale);
    take(j, "baseline_hu", c.baseline_hu);
    take(j, "k_max", c.k_max);
    take(j, "predictor", c.predictor);
    take(j, "num_classes", c.num_classes);
    take(j, "synthetic_threshold", c.synthetic_threshold);
    take(j, "synthetic_gain", c.synthetic_gain);
    take(j, "timeout_ms", c.timeout_ms);
    take(j, "workers", c.workers);
    take(j, "spill", c.spill);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

namespace {

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("short write on " + p.string());
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << s;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

json box_json(const BBox& b) {
  return {{"min", {b.min.x, b.min.y, b.min.z}}, {"max", {b.max.x, b.max.y, b.max.z}}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json input_hashes(const RunConfig& c) {
  json out = json::object();
  auto add = [&](const char* key, const std::string& path) {
    if (path.empty()) return;
    const auto paths = vraw::resolve(path);
    out[key] = {{"path", path}, {"sha256_json", sha256_file(paths.sidecar)}, {"sha256_raw", sha256_file(paths.data)}};
  };
  add("volume", c.volume);
  add("labels", c.labels);
  add("roi", c.roi);
  if (!c.unit_map.empty()) add("unit_map", c.unit_map);
  if (!c.attribution.empty()) out["attribution"] = {{"path", c.attribution}, {"sha256", sha256_file(c.attribution)}};
  return out;
}

json provenance(const RunConfig& c) { return {{"config", to_json(c)}, {"inputs", input_hashes(c)}}; }

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

struct Prepared {
  Dims full_dims;
  Spacing spacing;
  CroppedInputs inputs;
  UnitMap units;
};

Prepared prepare(const RunConfig& c) {
  require(c.volume, "--volume");
  require(c.labels, "--labels");
  require(c.roi, "--roi");
  Volume volume = vraw::read_volume(c.volume);
  LabelVolume labels = vraw::read_labels(c.labels);
  Mask roi = vraw::read_mask(c.roi);
  Prepared p{volume.dims(), volume.spacing(), crop_inputs(volume, labels, roi, c.patch), {}};
  if (!c.unit_map.empty()) {
    p.units = read_unit_map(c.unit_map);
    if (!(p.units.dims == p.inputs.volume.dims())) {
      throw ValidationError(c.unit_map + ": unit map dims " + to_string(p.units.dims) +
                            " do not match the receptive-field crop " + to_string(p.inputs.volume.dims()));
    }
  } else {
    PartitionConfig pc;
    pc.kind = parse_unit_kind(c.units);
    pc.fcc.scale_mm = c.scale_mm;
    pc.hybrid.min_fragment_voxels = c.min_fragment;
    p.units = make_units(p.inputs, pc);
  }
  return p;
}

json crop_json(const Prepared& p) {
  return {{"roi_cube", box_json(p.inputs.region.roi_cube.box)},
          {"non_cubic", p.inputs.region.roi_cube.non_cubic},
          {"rf_bbox", box_json(p.inputs.region.rf_box)},
          {"crop_dims", {p.inputs.volume.dims().nx, p.inputs.volume.dims().ny, p.inputs.volume.dims().nz}}};
}

std::unique_ptr<PatchPredictor> make_predictor(const RunConfig& c) {
  if (c.predictor == "synthetic") {
    if (c.num_classes != 2) throw ValidationError("the synthetic predictor has exactly 2 classes");
    return std::make_unique<SyntheticPredictor>(SyntheticPredictor::threshold(c.synthetic_threshold, c.synthetic_gain));
  }
  if (c.predictor.rfind("exec:", 0) == 0) {
    bridge::ExecOptions o;
    o.command = c.predictor.substr(5);
    o.patch_size = c.patch;
    o.num_classes = c.num_classes;
    o.timeout = std::chrono::milliseconds(c.timeout_ms);
    return std::make_unique<bridge::ExecPredictor>(o);
  }
  throw ValidationError("unknown predictor '" + c.predictor + "' (expected synthetic or exec:<command>)");
}

int effective_workers(const RunConfig& c, const PatchPredictor& pred) {
  if (c.workers < 0) throw ValidationError("--workers must be >= 0");
  return pred.supports_concurrency() ? resolve_workers(c.workers) : 1;
}

InferenceConfig inference_config(const RunConfig& c) {
  InferenceConfig ic;
  ic.patch_size = c.patch;
  ic.overlap = c.overlap;
  ic.sigma_scale = c.sigma_scale;
  ic.baseline.value_hu = static_cast<float>(c.baseline_hu);
  return ic;
}

ScoreConfig score_config(const RunConfig& c, const std::string& kind) {
  return {parse_score_kind(kind), c.target_class, c.dice_epsilon};
}

struct Engine {
  Prepared prepared;
  std::unique_ptr<PatchPredictor> predictor;
  int workers = 1;
  std::unique_ptr<ExplainSession> session;
};

Engine make_engine(const RunConfig& c) {
  Engine e;
  e.prepared = prepare(c);
  e.predictor = make_predictor(c);
  e.workers = effective_workers(c, *e.predictor);
  e.session = std::make_unique<ExplainSession>(e.prepared.inputs.volume, e.prepared.inputs.roi, e.prepared.units,
                                               *e.predictor, inference_config(c), c.target_class, e.workers);
  return e;
}

json cache_json(const CacheTotals& t, std::size_t baseline_calls, std::size_t predictor_calls) {
  const auto speed = expected_speedup(t.mean_hit_rate());
  return {{"coalitions", t.coalitions},
          {"hits", t.hits},
          {"misses", t.misses},
          {"mean_hit_rate", t.mean_hit_rate()},
          {"pooled_hit_rate", t.pooled_hit_rate()},
          {"expected_speedup", optional_json(speed)},
          {"baseline_calls", baseline_calls},
          {"predictor_calls", predictor_calls}};
}

json diagnostics_json(const SolveDiagnostics& d) {
  return {{"fit_count", d.fit_count},
          {"residual_max", d.residual_max},
          {"residual_mean", d.residual_mean},
          {"residual_p50", d.residual_p50},
          {"residual_p90", d.residual_p90},
          {"cond", d.cond},
          {"refinement_steps", d.refinement_steps},
          {"holdout_count", d.holdout_count},
          {"holdout_mae", optional_json(d.holdout_mae)},
          {"holdout_r2", optional_json(d.holdout_r2)}};
}

ShapConfig shap_config(const RunConfig& c) {
  ShapConfig s;
  s.budget = c.budget;
  s.seed = c.seed;
  s.holdout = c.holdout;
  s.ridge = c.ridge;
  return s;
}

int cmd_partition(const RunConfig& c) {
  const Prepared p = prepare(c);
  const fs::path out(c.out);
  const json prov = provenance(c);
  write_unit_map(out / "units", p.units, prov);
  const auto counts = p.units.counts();
  json summary = {{"M", p.units.num_units},
                  {"kind", to_string(p.units.kind)},
                  {"scale_mm", p.units.scale_mm},
                  {"excluded_voxels", counts[0]},
                  {"unit_voxels", std::vector<std::size_t>(counts.begin() + 1, counts.end())},
                  {"unit_map_hash", p.units.content_hash()},
                  {"bbox", box_json(p.inputs.region.roi_cube.box)},
                  {"rf_bbox", box_json(p.inputs.region.rf_box)},
                  {"non_cubic", p.inputs.region.roi_cube.non_cubic}};
  summary.update(prov);
  write_json(out / "partition.json", summary);
  std::cout << "partition: M=" << p.units.num_units << " -> " << (out / "units.json").string() << '\n';
  return kExitOk;
}

int cmd_attribute(const RunConfig& c) {
  Engine e = make_engine(c);
  auto& s = *e.session;
  const fs::path out(c.out);
  const json prov = provenance(c);
  const std::size_t m = s.num_units();
  const std::size_t baseline_calls = s.predictor_calls();
  write_unit_map(out / "units", s.units(), prov);

  for (const auto& kind : c.score) {
    const ScoreConfig sc = score_config(c, kind);
    s.reset_totals();
    const auto calls_before = s.predictor_calls();
    const auto value = s.value_function(sc);
    const auto plan = sample_coalitions(m, shap_config(c));
    const auto sample = evaluate_coalitions(plan, m, value, e.workers);
    const auto attr = solve(sample, {c.ridge, c.holdout, c.seed});
    const auto totals = s.totals();
    const auto kind_calls = s.predictor_calls() - calls_before;

    json j = {{"phi", attr.phi},
              {"phi0", attr.phi0},
              {"v_full", attr.v_full},
              {"num_units", m},
              {"score", to_string(sc.kind)},
              {"target_class", sc.target_class},
              {"unit_map_hash", s.units().content_hash()},
              {"unit_kind", to_string(s.units().kind)},
              {"budget", c.budget},
              {"budget_semantics", "unique non-trivial coalitions; v(1) and v(0) evaluated in addition"},
              {"enumerated", plan.enumerated},
              {"num_coalitions", sample.masks.size()},
              {"sample_draws", plan.draws},
              {"diagnostics", diagnostics_json(attr.diagnostics)},
              {"cache", cache_json(totals, baseline_calls, baseline_calls + kind_calls)},
              {"crop", crop_json(e.prepared)}};
    if (c.exact) {
      if (m > kMaxExactUnits) {
        throw ValidationError("--exact refuses M=" + std::to_string(m) + " (limit " + std::to_string(kMaxExactUnits) + ")");
      }
      const auto ex = exact_shapley(value, m, e.workers);
      double diff = 0.0;
      for (std::size_t i = 0; i < m; ++i) diff = std::max(diff, std::abs(ex.phi[i] - attr.phi[i]));
      j["exact"] = {{"phi", ex.phi}, {"max_abs_diff", diff}};
    }
    j.update(prov);
    const std::string stem = "attribution_" + to_string(sc.kind);
    write_json(out / (stem + ".json"), j);
    const auto raster = attribution_raster(s.units(), attr.phi, e.prepared.full_dims, e.prepared.spacing,
                                           e.prepared.inputs.region.rf_box.min);
    vraw::write(out / (stem + "_map"), raster, {{"score", to_string(sc.kind)}, {"unit_map_hash", s.units().content_hash()}});
    std::cout << "attribute[" << to_string(sc.kind) << "]: M=" << m << " coalitions=" << sample.masks.size()
              << " mean_hit_rate=" << totals.mean_hit_rate() << " -> " << (out / (stem + ".json")).string() << '\n';
  }
  return kExitOk;
}

int cmd_curves(const RunConfig& c) {
  require(c.attribution, "--attribution");
  const json attr = read_json_file(c.attribution);
  std::vector<double> phi;
  std::string attr_hash;
  try {
    phi = attr.at("phi").get<std::vector<double>>();
    attr_hash = attr.at("unit_map_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(c.attribution + ": " + e.what());
  }
  Engine e = make_engine(c);
  auto& s = *e.session;
  if (s.units().content_hash() != attr_hash) {
    throw ValidationError("unit map hash " + s.units().content_hash() + " does not match the attribution's " + attr_hash);
  }
  if (phi.size() != s.num_units()) throw ValidationError("attribution length does not match the unit count");

  const fs::path out(c.out);
  const json prov = provenance(c);
  const auto morf_order = rank_units(phi, Ordering::MoRF);
  const auto lerf_order = rank_units(phi, Ordering::LeRF);
  for (const auto& kind : c.score) {
    const ScoreConfig sc = score_config(c, kind);
    const auto value = s.value_function(sc);
    const auto morf = deletion_curve(morf_order, Ordering::MoRF, value, c.k_max);
    const auto lerf = deletion_curve(lerf_order, Ordering::LeRF, value, c.k_max);
    const auto metrics = curve_metrics(morf, lerf);
    const std::string name = to_string(sc.kind);
    write_text(out / ("curves_" + name + ".csv"), curves_csv(morf, lerf, metrics));
    json j = {{"aopc", metrics.aopc},
              {"abpc", metrics.abpc},
              {"naopc", metrics.n_aopc},
              {"nabpc", metrics.n_abpc},
              {"s_min", metrics.s_min},
              {"s_max", metrics.s_max},
              {"degenerate_range", metrics.degenerate_range},
              {"out_of_range", metrics.out_of_range},
              {"K", morf.K()},
              {"num_units", s.num_units()},
              {"score", name},
              {"morf_order", morf_order},
              {"lerf_order", lerf_order}};
    j.update(prov);
    write_json(out / ("metrics_" + name + ".json"), j);
    std::cout << "curves[" << name << "]: K=" << morf.K() << " aopc=" << metrics.aopc << " abpc=" << metrics.abpc
              << " naopc=" << metrics.n_aopc << " nabpc=" << metrics.n_abpc << '\n';
  }
  return kExitOk;
}

int cmd_convergence(const RunConfig& c) {
  std::vector<std::size_t> budgets = c.budgets;
  if (budgets.empty()) budgets = {250, 500, 1000};
  Engine e = make_engine(c);
  auto& s = *e.session;
  const fs::path out(c.out);
  const json prov = provenance(c);
  const std::size_t m = s.num_units();
  for (const auto& kind : c.score) {
    const ScoreConfig sc = score_config(c, kind);
    const auto report = convergence_report(s.value_function(sc), m, budgets, shap_config(c), e.workers);
    json rows = json::array();
    std::optional<std::size_t> converged_at;
    for (const auto& b : report.budgets) {
      rows.push_back({{"budget", b.budget},
                      {"enumerated", b.enumerated},
                      {"phi", b.phi},
                      {"l1_change", optional_json(b.l1_change)},
                      {"diagnostics", diagnostics_json(b.diagnostics)}});
      if (!converged_at && b.l1_change && *b.l1_change <= c.l1_threshold) converged_at = b.budget;
    }
    json j = {{"num_units", m},
              {"score", to_string(sc.kind)},
              {"budgets", rows},
              {"l1_threshold", c.l1_threshold},
              {"converged_at", converged_at ? json(*converged_at) : json(nullptr)},
              {"cache", cache_json(s.totals(), s.cache().size(), s.predictor_calls())}};
    j.update(prov);
    const auto path = out / ("convergence_" + to_string(sc.kind) + ".json");
    write_json(path, j);
    std::cout << "convergence[" << to_string(sc.kind) << "]: " << report.budgets.size() << " budgets -> "
              << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_cache_stats(const RunConfig& c) {
  Engine e = make_engine(c);
  auto& s = *e.session;
  const fs::path out(c.out);
  const std::size_t m = s.num_units();
  const std::size_t baseline_calls = s.predictor_calls();

  json per_unit = json::array();
  const auto counts = s.units().counts();
  for (std::size_t j = 0; j < m; ++j) {
    Coalition one = Coalition::all(m);
    one.keep[j] = 0;
    const auto r = s.predict(one, e.workers);
    per_unit.push_back({{"unit", j + 1}, {"voxels", counts[j + 1]}, {"hit_rate", r.stats.hit_rate()}});
  }
  s.reset_totals();
  const auto plan = sample_coalitions(m, shap_config(c));
  parallel_for(plan.items.size(), e.workers, [&](std::size_t i) { s.predict(plan.items[i].mask); });
  const auto totals = s.totals();

  json j = {{"num_units", m},
            {"num_patches", s.grid().origins.size()},
            {"patch_size", {s.grid().patch_size.x, s.grid().patch_size.y, s.grid().patch_size.z}},
            {"step", {s.grid().step.x, s.grid().step.y, s.grid().step.z}},
            {"cache_memory_bytes", s.cache().memory_bytes()},
            {"sampled", cache_json(totals, baseline_calls, s.predictor_calls())},
            {"single_unit_removal", per_unit},
            {"crop", crop_json(e.prepared)}};
  if (!c.spill.empty()) {
    write_cache_spill(c.spill, s.cache());
    j["spill"] = c.spill;
  }
  j.update(provenance(c));
  write_json(out / "cache_stats.json", j);
  std::cout << "cache-stats: patches=" << s.grid().origins.size() << " mean_hit_rate=" << totals.mean_hit_rate()
            << " pooled_hit_rate=" << totals.pooled_hit_rate() << '\n';
  return kExitOk;
}

std::string key_of(const CLI::Option* o) {
  std::string name = o->get_name();
  while (!name.empty() && name.front() == '-') name.erase(name.begin());
  for (auto& ch : name) {
    if (ch == '-') ch = '_';
  }
  return name;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"voxshap: Shapley attribution for patch-based 3D segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "voxshap 1.0.0");

  RunConfig flags;
  std::string config_path, patch_str, score_str, budgets_str;
  std::vector<CLI::Option*> options;

  auto add_common = [&](CLI::App* sub) {
    auto opt = [&](CLI::Option* o) { options.push_back(o); };
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    opt(sub->add_option("--volume", flags.volume, "CT volume (VRAW f32)"));
    opt(sub->add_option("--labels", flags.labels, "organ label map (VRAW u16/u8)"));
    opt(sub->add_option("--roi", flags.roi, "ROI mask (VRAW u8)"));
    opt(sub->add_option("--out", flags.out, "output directory"));
    opt(sub->add_option("--unit-map", flags.unit_map, "precomputed unit map (VRAW)"));
    opt(sub->add_option("--units", flags.units, "organs|fcc|hybrid")->check(CLI::IsMember({"organs", "fcc", "hybrid"})));
    opt(sub->add_option("--scale-mm", flags.scale_mm, "FCC cube pitch S in mm"));
    opt(sub->add_option("--min-fragment", flags.min_fragment, "hybrid fragment merge threshold (voxels)"));
    opt(sub->add_option("--score", score_str, "tp|fp|dice|softdice, comma separated"));
    opt(sub->add_option("--target-class", flags.target_class, "target class t"));
    opt(sub->add_option("--dice-epsilon", flags.dice_epsilon, "Dice stabilizer"));
    opt(sub->add_option("--budget", flags.budget, "unique non-trivial coalitions"));
    opt(sub->add_option("--seed", flags.seed, "sampler seed"));
    opt(sub->add_option("--holdout", flags.holdout, "held-out coalition fraction"));
    opt(sub->add_option("--ridge", flags.ridge, "ridge on the reduced system"));
    opt(sub->add_option("--patch", patch_str, "patch size PX,PY,PZ"));
    opt(sub->add_option("--overlap", flags.overlap, "sliding-window overlap in (0,1)"));
    opt(sub->add_option("--sigma-scale", flags.sigma_scale, "Gaussian sigma / patch size"));
    opt(sub->add_option("--baseline-hu", flags.baseline_hu, "masking value for removed units"));
    opt(sub->add_option("--predictor", flags.predictor, "synthetic | exec:<command>"));
    opt(sub->add_option("--num-classes", flags.num_classes, "class count C"));
    opt(sub->add_option("--synthetic-threshold", flags.synthetic_threshold, "synthetic predictor threshold (HU)"));
    opt(sub->add_option("--synthetic-gain", flags.synthetic_gain, "synthetic predictor logit gain"));
    opt(sub->add_option("--timeout-ms", flags.timeout_ms, "external predictor timeout"));
    opt(sub->add_option("--workers", flags.workers, "worker threads (0 = all)"));
  };

  auto* partition = app.add_subcommand("partition", "compute and write the unit map");
  auto* attribute = app.add_subcommand("attribute", "KernelSHAP attribution");
  auto* curves = app.add_subcommand("curves", "MoRF/LeRF deletion curves and AOPC/ABPC");
  auto* convergence = app.add_subcommand("convergence", "attribution stability across budgets");
  auto* cache_stats = app.add_subcommand("cache-stats", "patch-cache hit rates");
  for (auto* sub : {partition, attribute, curves, convergence, cache_stats}) add_common(sub);
  options.push_back(attribute->add_flag("--exact", flags.exact, "also compute exact Shapley values (M <= 20)"));
  options.push_back(curves->add_option("--attribution", flags.attribution, "attribution JSON"));
  options.push_back(curves->add_option("--k-max", flags.k_max, "maximum curve steps"));
  options.push_back(convergence->add_option("--budgets", budgets_str, "ascending budgets, comma separated"));
  options.push_back(convergence->add_option("--l1-threshold", flags.l1_threshold, "convergence threshold"));
  options.push_back(cache_stats->add_option("--spill", flags.spill, "write the cache to <stem>.json/.bin"));

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    json given = json::object();
    if (!patch_str.empty()) flags.patch = parse_patch(patch_str);
    if (!score_str.empty()) flags.score = split(score_str, ',');
    if (!budgets_str.empty()) flags.budgets = parse_budgets(budgets_str);
    const json flag_json = to_json(flags);
    for (const auto* o : options) {
      if (o->count() > 0) given[key_of(o)] = flag_json.at(key_of(o));
    }
    RunConfig cfg;
    if (!config_path.empty()) {
      json file = read_json_file(config_path);
      if (file.contains("config") && file["config"].is_object()) file = file["config"];
      merge_json(cfg, file);
    }
    merge_json(cfg, given);
    if (cfg.score.empty()) throw ValidationError("--score must name at least one score kind");
    for (const auto& k : cfg.score) (void)parse_score_kind(k);

    if (partition->parsed()) return cmd_partition(cfg);
    if (attribute->parsed()) return cmd_attribute(cfg);
    if (curves->parsed()) return cmd_curves(cfg);
    if (convergence->parsed()) return cmd_convergence(cfg);
    return cmd_cache_stats(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kExitProtocol;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace voxshap::cli
