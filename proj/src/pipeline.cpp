#include "sdeflow/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "sdeflow/common.hpp"
#include "sdeflow/digest.hpp"
#include "sdeflow/evalkit.hpp"
#include "sdeflow/io.hpp"
#include "sdeflow/reverse_sampler.hpp"

namespace sdeflow::pipeline {

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::desk;
  if (s == "full") return Scale::full;
  throw ConfigError("unknown scale '" + s + "' (expected desk or full)");
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::labels: return "labels";
    case Stage::train: return "train";
    case Stage::predict: return "predict";
    case Stage::evaluate: return "evaluate";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Presets and config parsing

json preset_config(const std::string& benchmark, Scale scale) {
  const BenchmarkPreset& p = benchmark_preset(benchmark);
  const bool desk = scale == Scale::desk;
  const bool well = benchmark == "double_well";
  const double horizon = desk && well ? 100.0 : p.horizon;
  const double T = desk && well ? 100.0 : p.metric_time;

  json grid = "auto";
  if (benchmark == "ou1d") grid = json{{"lo", 0.5}, {"hi", 2.0}, {"n", 100}};

  std::size_t n_paths = 500000;
  if (desk) n_paths = well ? 1000 : 20000;

  return json{
      {"benchmark", {{"name", benchmark}, {"overrides", json::object()}}},
      {"simulate",
       {{"H", desk ? std::size_t{10000} : p.full_trajectories},
        {"L", p.steps},
        {"dt", p.dt},
        {"init_lo", p.init_lo},
        {"init_hi", p.init_hi},
        {"seed", 1}}},
      {"labels",
       {{"J", desk ? std::size_t{20000} : p.full_labels},
        {"K", desk ? 2000 : 10000},
        {"fraction", 0.01},
        {"nu", 1.0},
        {"seed", 2}}},
      {"train",
       {{"widths", desk ? std::vector<std::size_t>{16, 32, 64} : std::vector<std::size_t>{16, 32, 64, 128}},
        {"epochs", 2000},
        {"lr", 0.01},
        {"split", 0.8},
        {"batch", 0},
        {"seed", 5},
        {"activation", "tanh"}}},
      {"predict",
       {{"x0", p.x0},
        {"steps", static_cast<std::size_t>(std::llround(horizon / p.dt))},
        {"n_paths", n_paths},
        {"seed", 3}}},
      {"evaluate",
       {{"grid", grid},
        {"n_z", 100000},
        {"bins", 40},
        {"min_count", 200},
        {"T", T},
        {"seed", 4},
        {"well_barrier", 0.0}}},
  };
}

namespace {

void check_keys(const json& block, const std::string& where, std::set<std::string> allowed) {
  if (!block.is_object()) throw ConfigError("config block '" + where + "' must be an object");
  for (const auto& [key, value] : block.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in config block '" + where + "'");
  }
}

template <typename T>
T get(const json& block, const std::string& where, const char* key) {
  if (!block.contains(key)) throw ConfigError("missing '" + where + "." + key + "'");
  try {
    return block.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + where + "." + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& block, const std::string& where, const char* key) {
  const json& v = block.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw ConfigError("'" + where + "." + key + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const json& block, const std::string& where) {
  const json& v = block.at("seed");
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("'" + where + ".seed' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

double get_positive(const json& block, const std::string& where, const char* key) {
  const double v = get<double>(block, where, key);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("'" + where + "." + key + "' must be positive");
  return v;
}

Param parse_param(const std::string& key, const json& v) {
  if (v.is_number()) return Param::scalar(v.get<double>());
  if (v.is_array() && !v.empty() && v.front().is_array()) {
    const std::size_t rows = v.size();
    const std::size_t cols = v.front().size();
    std::vector<double> values;
    for (const auto& row : v) {
      if (!row.is_array() || row.size() != cols) throw ConfigError("override '" + key + "' is ragged");
      for (const auto& x : row) {
        if (!x.is_number()) throw ConfigError("override '" + key + "' must be numeric");
        values.push_back(x.get<double>());
      }
    }
    return Param::matrix(rows, cols, std::move(values));
  }
  throw ConfigError("override '" + key + "' must be a number or a matrix (array of rows)");
}

json param_to_json(const Param& p) {
  if (p.is_scalar()) return p.value();
  json rows = json::array();
  for (std::size_t r = 0; r < p.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < p.cols; ++c) row.push_back(p.values[r * p.cols + c]);
    rows.push_back(row);
  }
  return rows;
}

std::string hash_join(std::initializer_list<std::string> parts) {
  Sha256 h;
  for (const auto& p : parts) h.update_u64(p.size()).update(p);
  return h.hex();
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(doc, "<root>", {"benchmark", "scale", "simulate", "labels", "train", "predict", "evaluate"});
  if (!doc.contains("benchmark")) throw ConfigError("config needs a 'benchmark' block");

  json bench = doc.at("benchmark");
  if (bench.is_string()) bench = json{{"name", bench}};
  check_keys(bench, "benchmark", {"name", "overrides"});
  const std::string name = get<std::string>(bench, "benchmark", "name");
  const auto& names = benchmark_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown benchmark '" + name + "'");
  }
  const Scale scale = doc.contains("scale") ? parse_scale(get<std::string>(doc, "<root>", "scale"))
                                            : Scale::desk;

  json merged = preset_config(name, scale);
  for (const char* block : {"simulate", "labels", "train", "predict", "evaluate"}) {
    if (!doc.contains(block)) continue;
    const json& user = doc.at(block);
    check_keys(user, block, [&] {
      std::set<std::string> keys;
      for (const auto& [k, v] : merged.at(block).items()) keys.insert(k);
      return keys;
    }());
    for (const auto& [k, v] : user.items()) merged[block][k] = v;
  }

  ExperimentConfig cfg;
  cfg.benchmark = name;
  json overrides = json::object();
  if (bench.contains("overrides")) {
    if (!bench.at("overrides").is_object()) throw ConfigError("'benchmark.overrides' must be an object");
    for (const auto& [k, v] : bench.at("overrides").items()) {
      cfg.overrides[k] = parse_param(k, v);
      overrides[k] = param_to_json(cfg.overrides[k]);
    }
  }
  const SdeSpec spec = make_benchmark(name, cfg.overrides);  // validates overrides
  merged["benchmark"] = json{{"name", name}, {"overrides", overrides}};
  const std::size_t d = spec.dim;

  const json& s = merged.at("simulate");
  cfg.simulate.H = get_count(s, "simulate", "H");
  cfg.simulate.L = get_count(s, "simulate", "L");
  cfg.simulate.dt = get_positive(s, "simulate", "dt");
  cfg.simulate.init_lo = get<std::vector<double>>(s, "simulate", "init_lo");
  cfg.simulate.init_hi = get<std::vector<double>>(s, "simulate", "init_hi");
  cfg.simulate.seed = get_seed(s, "simulate");
  if (cfg.simulate.init_lo.size() != d || cfg.simulate.init_hi.size() != d) {
    throw ConfigError("simulate.init_lo/init_hi must have " + std::to_string(d) + " entries");
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (!(cfg.simulate.init_lo[c] <= cfg.simulate.init_hi[c])) {
      throw ConfigError("simulate.init_lo must not exceed init_hi");
    }
  }

  const json& l = merged.at("labels");
  cfg.labels.J = get_count(l, "labels", "J");
  cfg.labels.K = get_count(l, "labels", "K");
  if (cfg.labels.K < 2) throw ConfigError("labels.K must be at least 2");
  cfg.labels.fraction = get_positive(l, "labels", "fraction");
  if (cfg.labels.fraction > 1.0) throw ConfigError("labels.fraction must lie in (0, 1]");
  cfg.labels.nu = get_positive(l, "labels", "nu");
  cfg.labels.seed = get_seed(l, "labels");

  const json& t = merged.at("train");
  cfg.train.widths = get<std::vector<std::size_t>>(t, "train", "widths");
  if (cfg.train.widths.empty()) throw ConfigError("train.widths must not be empty");
  for (std::size_t w : cfg.train.widths) {
    if (w == 0) throw ConfigError("train.widths must be positive");
  }
  cfg.train.epochs = get_count(t, "train", "epochs");
  cfg.train.lr = get_positive(t, "train", "lr");
  cfg.train.split = get_positive(t, "train", "split");
  if (cfg.train.split >= 1.0) throw ConfigError("train.split must lie in (0, 1)");
  cfg.train.batch = get<std::size_t>(t, "train", "batch");
  cfg.train.seed = get_seed(t, "train");
  cfg.train.activation = parse_activation(get<std::string>(t, "train", "activation"));

  const json& p = merged.at("predict");
  cfg.predict.x0 = get<std::vector<double>>(p, "predict", "x0");
  if (cfg.predict.x0.size() != d) throw ConfigError("predict.x0 must have " + std::to_string(d) + " entries");
  cfg.predict.steps = get_count(p, "predict", "steps");
  cfg.predict.n_paths = get_count(p, "predict", "n_paths");
  cfg.predict.seed = get_seed(p, "predict");

  const json& e = merged.at("evaluate");
  const json& g = e.at("grid");
  if (g.is_string()) {
    if (g.get<std::string>() != "auto") throw ConfigError("evaluate.grid must be \"auto\" or {lo, hi, n}");
    cfg.evaluate.grid.automatic = true;
  } else {
    check_keys(g, "evaluate.grid", {"lo", "hi", "n"});
    cfg.evaluate.grid.automatic = false;
    cfg.evaluate.grid.lo = get<double>(g, "evaluate.grid", "lo");
    cfg.evaluate.grid.hi = get<double>(g, "evaluate.grid", "hi");
    if (g.contains("n")) cfg.evaluate.grid.n = get_count(g, "evaluate.grid", "n");
    if (!(cfg.evaluate.grid.hi > cfg.evaluate.grid.lo) || cfg.evaluate.grid.n < 2) {
      throw ConfigError("evaluate.grid needs hi > lo and n >= 2");
    }
  }
  cfg.evaluate.n_z = get_count(e, "evaluate", "n_z");
  if (cfg.evaluate.n_z < 1000) throw ConfigError("evaluate.n_z must be at least 1000");
  cfg.evaluate.bins = get_count(e, "evaluate", "bins");
  if (cfg.evaluate.bins < 2) throw ConfigError("evaluate.bins must be at least 2");
  cfg.evaluate.min_count = get_count(e, "evaluate", "min_count");
  cfg.evaluate.T = get_positive(e, "evaluate", "T");
  cfg.evaluate.seed = get_seed(e, "evaluate");
  cfg.evaluate.well_barrier = get<double>(e, "evaluate", "well_barrier");
  const double horizon = static_cast<double>(cfg.predict.steps) * cfg.simulate.dt;
  const double steps_to_T = cfg.evaluate.T / cfg.simulate.dt;
  if (cfg.evaluate.T > horizon * (1.0 + 1e-12) ||
      std::abs(steps_to_T - std::round(steps_to_T)) > 1e-6) {
    throw ConfigError("evaluate.T must be a multiple of dt within the prediction horizon");
  }

  merged.erase("scale");
  cfg.normalized = merged;
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

std::string ExperimentConfig::config_digest() const { return sha256_hex(normalized.dump()); }

std::string ExperimentConfig::stage_digest(Stage s) const {
  const std::string sim = hash_join({"simulate", normalized.at("benchmark").dump(),
                                     normalized.at("simulate").dump()});
  if (s == Stage::simulate) return sim;
  const std::string lab = hash_join({"labels", sim, normalized.at("labels").dump()});
  if (s == Stage::labels) return lab;
  const std::string trn = hash_join({"train", lab, normalized.at("train").dump()});
  if (s == Stage::train) return trn;
  const std::string prd = hash_join({"predict", trn, normalized.at("predict").dump()});
  if (s == Stage::predict) return prd;
  return hash_join({"evaluate", prd, normalized.at("evaluate").dump()});
}

fs::path resolve_out_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "sde-flowlearn-out";
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

bool artifact_current(const fs::path& artifact, const std::string& stage_digest) {
  if (!fs::exists(artifact) || !fs::exists(io::sidecar_path(artifact))) return false;
  try {
    const json meta = io::read_sidecar(artifact);
    return meta.value("stage_digest", "") == stage_digest &&
           meta.value("file_sha256", "") == file_sha256(artifact);
  } catch (const std::exception&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Stages

namespace {

void log_line(const RunOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Verifies an upstream artifact against the expected stage digest and its recorded hash.
json require_upstream(const fs::path& artifact, Stage stage, const ExperimentConfig& cfg) {
  const std::string name = stage_name(stage);
  if (!fs::exists(artifact)) {
    throw ConfigError("missing " + name + " artifact " + artifact.string() + "; run the '" + name +
                      "' stage first");
  }
  if (!fs::exists(io::sidecar_path(artifact))) {
    throw StaleArtifactError("artifact " + artifact.string() + " has no provenance sidecar");
  }
  const json meta = io::read_sidecar(artifact);
  if (meta.value("stage_digest", "") != cfg.stage_digest(stage)) {
    throw StaleArtifactError("stale " + name + " artifact " + artifact.string() +
                             ": it was produced by a different configuration; rerun '" + name + "'");
  }
  if (meta.value("file_sha256", "") != file_sha256(artifact)) {
    throw StaleArtifactError("artifact " + artifact.string() + " was modified after it was written");
  }
  return json{{"stage_digest", meta.at("stage_digest")}, {"file_sha256", meta.at("file_sha256")},
              {"upstream", meta.value("upstream", json::object())}};
}

void write_provenance(const fs::path& artifact, Stage stage, const ExperimentConfig& cfg,
                      const json& upstream, const json& extra) {
  json meta = {{"stage", stage_name(stage)},
               {"stage_digest", cfg.stage_digest(stage)},
               {"config_digest", cfg.config_digest()},
               {"file_sha256", file_sha256(artifact)},
               {"upstream", upstream}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  io::write_sidecar(artifact, meta);
}

/// Flattens the chain of upstream provenance records into {stage: {stage_digest, file_sha256}}.
json flatten_upstream(const std::string& stage, const json& record) {
  json out = record.value("upstream", json::object());
  out[stage] = {{"stage_digest", record.at("stage_digest")}, {"file_sha256", record.at("file_sha256")}};
  return out;
}

}  // namespace

json cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts art{opt.out_dir};
  const SdeSpec spec = make_benchmark(cfg.benchmark, cfg.overrides);
  const InitialDistribution init{cfg.simulate.init_lo, cfg.simulate.init_hi};
  const TrajectoryBatch batch = simulate(spec, init, cfg.simulate.H, cfg.simulate.L,
                                         cfg.simulate.dt, cfg.simulate.seed, opt.workers);
  const ObservationSet obs = build_observation_set(batch);
  io::write_observations(art.observations(), obs);
  const std::string digest = content_digest(obs);
  write_provenance(art.observations(), Stage::simulate, cfg, json::object(),
                   {{"content_digest", digest}, {"M", obs.size()}, {"d", obs.dim}, {"dt", obs.dt}});
  json summary = {{"stage", "simulate"}, {"path", art.observations().string()}, {"M", obs.size()},
                  {"d", obs.dim},        {"dt", obs.dt},                        {"content_digest", digest},
                  {"seconds", seconds_since(t0)}};
  log_line(opt, "simulate: M=" + std::to_string(obs.size()) + " d=" + std::to_string(obs.dim) +
                    " dt=" + json(obs.dt).dump() + " -> " + art.observations().string());
  return summary;
}

json cmd_labels(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts art{opt.out_dir};
  const json up = require_upstream(art.observations(), Stage::simulate, cfg);
  const ObservationSet obs = io::read_observations(art.observations());
  LabelOptions lo;
  lo.J = cfg.labels.J;
  lo.K = cfg.labels.K;
  lo.fraction = cfg.labels.fraction;
  lo.nu = cfg.labels.nu;
  lo.seed = cfg.labels.seed;
  lo.workers = opt.workers;
  log_line(opt, "labels: J=" + std::to_string(lo.J) + " K=" + std::to_string(lo.K) + " from M=" +
                    std::to_string(obs.size()) + " pairs");
  const LabeledSet labels = generate_labels(obs, lo);
  io::write_labels(art.labels(), labels);
  const std::string digest = content_digest(labels);
  write_provenance(art.labels(), Stage::labels, cfg, flatten_upstream("simulate", up),
                   {{"content_digest", digest}, {"J", labels.size()}, {"K", lo.K}});
  log_line(opt, "labels: wrote " + art.labels().string());
  return {{"stage", "labels"}, {"path", art.labels().string()}, {"J", labels.size()},
          {"K", lo.K},         {"content_digest", digest},       {"seconds", seconds_since(t0)}};
}

json cmd_train(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts art{opt.out_dir};
  const json up = require_upstream(art.labels(), Stage::labels, cfg);
  const LabeledSet labels = io::read_labels(art.labels());
  TrainOptions to = cfg.train;
  to.workers = opt.workers;
  log_line(opt, "train: " + std::to_string(labels.size()) + " labels, " +
                    std::to_string(to.widths.size()) + " width(s), " + std::to_string(to.epochs) +
                    " epochs");
  const FlowMapModel model = train(labels, to);
  io::write_model(art.model(), model);
  json scores = json::array();
  for (const auto& [w, s] : model.meta.width_scores) scores.push_back({{"width", w}, {"val_mse", s}});
  write_provenance(art.model(), Stage::train, cfg, flatten_upstream("labels", up),
                   {{"width", model.hidden}, {"best_val_loss", model.meta.best_val_loss},
                    {"width_scores", scores}});
  log_line(opt, "train: selected width " + std::to_string(model.hidden) +
                    " (validation MSE " + json(model.meta.best_val_loss).dump() + ")");
  return {{"stage", "train"},  {"path", art.model().string()}, {"width", model.hidden},
          {"best_val_loss", model.meta.best_val_loss}, {"width_scores", scores},
          {"seconds", seconds_since(t0)}};
}

json cmd_predict(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts art{opt.out_dir};
  const json up = require_upstream(art.model(), Stage::train, cfg);
  const FlowMapModel model = io::read_model(art.model());
  const TrajectoryBatch ens = simulate_surrogate(model, cfg.predict.x0, cfg.predict.steps,
                                                 cfg.predict.n_paths, cfg.predict.seed, opt.workers);
  io::write_ensemble(art.ensemble(), ens);
  write_provenance(art.ensemble(), Stage::predict, cfg, flatten_upstream("train", up),
                   {{"paths", ens.paths}, {"steps", ens.steps}, {"failed_paths", ens.failed_paths.size()}});
  log_line(opt, "predict: " + std::to_string(ens.paths) + " paths x " + std::to_string(ens.steps) +
                    " steps, " + std::to_string(ens.failed_paths.size()) + " failed");
  return {{"stage", "predict"}, {"path", art.ensemble().string()}, {"paths", ens.paths},
          {"steps", ens.steps}, {"failed_paths", ens.failed_paths.size()},
          {"seconds", seconds_since(t0)}};
}

json cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Artifacts art{opt.out_dir};
  const SdeSpec spec = make_benchmark(cfg.benchmark, cfg.overrides);
  const double dt = cfg.simulate.dt;

  json upstream = json::object();
  IncrementSampler sampler;
  TrajectoryBatch surrogate;
  json model_info = nullptr;
  if (opt.oracle) {
    sampler = exact_flow_sampler(spec, dt);
    surrogate = simulate_surrogate(sampler, spec.dim, dt, cfg.predict.x0, cfg.predict.steps,
                                   cfg.predict.n_paths, cfg.predict.seed, opt.workers);
  } else {
    const json up_model = require_upstream(art.model(), Stage::train, cfg);
    const json up_ens = require_upstream(art.ensemble(), Stage::predict, cfg);
    upstream = flatten_upstream("predict", up_ens);
    const FlowMapModel model = io::read_model(art.model());
    sampler = model_sampler(model);
    surrogate = io::read_ensemble(art.ensemble());
    json scores = json::array();
    for (const auto& [w, s] : model.meta.width_scores) scores.push_back({{"width", w}, {"val_mse", s}});
    model_info = {{"width", model.hidden}, {"best_val_loss", model.meta.best_val_loss},
                  {"best_epoch", model.meta.best_epoch}, {"width_scores", scores}};
  }

  const TrajectoryBatch reference =
      simulate(spec, InitialDistribution::point(cfg.predict.x0), cfg.predict.n_paths,
               cfg.predict.steps, dt, cfg.evaluate.seed, opt.workers);
  const MomentSeries ms = ensemble_moments(surrogate);
  const MomentSeries mr = ensemble_moments(reference);
  const EndpointErrors ee = endpoint_moment_errors(ms, mr, cfg.evaluate.T);
  const std::string suffix = opt.oracle ? ".oracle.csv" : ".csv";
  io::write_moments_csv(art.dir / ("moments" + suffix), ms, &mr);

  json metrics = {{"E_T_m", ee.mean_error},
                  {"E_T_s", ee.std_error},
                  {"E_T_m_per_coord", ee.mean_error_per_coord},
                  {"E_T_s_per_coord", ee.std_error_per_coord},
                  {"T", cfg.evaluate.T},
                  {"n_paths_surrogate", ms.n_paths},
                  {"n_paths_reference", mr.n_paths},
                  {"failed_paths", surrogate.failed_paths.size()}};

  json grid_info = nullptr;
  if (spec.dim == 1 && spec.effective_drift) {
    double lo = cfg.evaluate.grid.lo;
    double hi = cfg.evaluate.grid.hi;
    if (cfg.evaluate.grid.automatic) {
      const json up_obs = require_upstream(art.observations(), Stage::simulate, cfg);
      if (opt.oracle) upstream["simulate"] = {{"stage_digest", up_obs.at("stage_digest")}, {"file_sha256", up_obs.at("file_sha256")}};
      const ObservationSet obs = io::read_observations(art.observations());
      std::tie(lo, hi) = central_range(obs.x);
    }
    const std::vector<double> grid = uniform_grid(lo, hi, cfg.evaluate.grid.n);
    const EffectiveCoefficients truth = exact_effective_coeffs(spec, grid, dt);
    const EffectiveCoefficients est = effective_coeffs_from_model(
        sampler, grid, cfg.evaluate.n_z, dt, spec.variant, cfg.evaluate.seed, opt.workers);
    metrics["E_a"] = relative_curve_error(truth.drift, est.drift);
    metrics["E_b"] = relative_curve_error(truth.diffusion, est.diffusion);
    metrics["drift_max_std_error"] = *std::max_element(est.drift.std_error.begin(), est.drift.std_error.end());
    metrics["diffusion_max_std_error"] =
        *std::max_element(est.diffusion.std_error.begin(), est.diffusion.std_error.end());
    grid_info = {{"automatic", cfg.evaluate.grid.automatic}, {"lo", lo}, {"hi", hi},
                 {"n", grid.size()}, {"norm", "discrete l2"}, {"n_z", cfg.evaluate.n_z}};
    io::write_curves_csv(art.dir / ("curves" + suffix), grid,
                         {{"a_exact", &truth.drift}, {"a_model", &est.drift},
                          {"b_exact", &truth.diffusion}, {"b_model", &est.diffusion}});
    try {
      const EffectiveCoefficients binned =
          effective_coeffs_from_trajectories(surrogate, cfg.evaluate.bins, cfg.evaluate.min_count);
      const EffectiveCoefficients binned_truth = exact_effective_coeffs(spec, binned.drift.grid, dt);
      metrics["binned_E_a"] = relative_curve_error(binned_truth.drift, binned.drift);
      metrics["binned_E_b"] = relative_curve_error(binned_truth.diffusion, binned.diffusion);
    } catch (const std::exception&) {
      metrics["binned_E_a"] = nullptr;
      metrics["binned_E_b"] = nullptr;
    }
  }
  if (cfg.benchmark == "double_well") {
    const WellOccupancy ws = well_occupancy(surrogate, cfg.evaluate.T, cfg.evaluate.well_barrier);
    const WellOccupancy wr = well_occupancy(reference, cfg.evaluate.T, cfg.evaluate.well_barrier);
    metrics["occupancy"] = {{"surrogate", {{"left", ws.left}, {"right", ws.right}}},
                            {"reference", {{"left", wr.left}, {"right", wr.right}}}};
  }

  json report = {{"schema", kMetricsSchema},
                 {"benchmark", cfg.benchmark},
                 {"oracle", opt.oracle},
                 {"config_digest", cfg.config_digest()},
                 {"stage_digest", cfg.stage_digest(Stage::evaluate)},
                 {"upstream", upstream},
                 {"grid", grid_info},
                 {"seeds",
                  {{"simulate", cfg.simulate.seed},
                   {"labels", cfg.labels.seed},
                   {"train", cfg.train.seed},
                   {"predict", cfg.predict.seed},
                   {"evaluate", cfg.evaluate.seed}}},
                 {"model", model_info},
                 {"metrics", metrics},
                 {"config", cfg.normalized}};
  const fs::path target = opt.oracle ? art.oracle_metrics() : art.metrics();
  io::write_text(target, report.dump(2) + "\n");
  write_provenance(target, Stage::evaluate, cfg, upstream, {{"oracle", opt.oracle}});
  log_line(opt, "evaluate: " + metrics.dump());
  report["seconds"] = seconds_since(t0);
  return report;
}

std::string cmd_report(const ExperimentConfig& cfg, const RunOptions& opt) {
  const Artifacts art{opt.out_dir};
  require_upstream(art.metrics(), Stage::evaluate, cfg);
  json r;
  try {
    r = json::parse(io::read_text(art.metrics()));
  } catch (const json::exception& e) {
    throw IoError("malformed metrics file: " + std::string(e.what()));
  }
  if (r.value("schema", "") != kMetricsSchema) throw IoError("unsupported metrics schema");
  const json& m = r.at("metrics");
  std::ostringstream out;
  out << std::setprecision(6);
  out << "# " << r.at("benchmark").get<std::string>() << (r.value("oracle", false) ? " (oracle)" : "")
      << "\n\n";
  out << "| metric | value |\n|---|---|\n";
  for (const char* key : {"E_a", "E_b", "E_T_m", "E_T_s", "binned_E_a", "binned_E_b"}) {
    if (m.contains(key) && !m.at(key).is_null()) out << "| " << key << " | " << m.at(key).get<double>() << " |\n";
  }
  out << "| T | " << m.at("T").get<double>() << " |\n";
  out << "| surrogate paths | " << m.at("n_paths_surrogate") << " |\n";
  out << "| failed paths | " << m.at("failed_paths") << " |\n";
  if (m.contains("occupancy")) {
    const json& o = m.at("occupancy");
    out << "| occupancy left/right (surrogate) | " << o.at("surrogate").at("left").get<double>() << " / "
        << o.at("surrogate").at("right").get<double>() << " |\n";
    out << "| occupancy left/right (reference) | " << o.at("reference").at("left").get<double>() << " / "
        << o.at("reference").at("right").get<double>() << " |\n";
  }
  if (!r.at("grid").is_null()) {
    const json& g = r.at("grid");
    out << "\nCoefficient grid: [" << g.at("lo").get<double>() << ", " << g.at("hi").get<double>()
        << "], " << g.at("n") << " points, " << g.at("n_z") << " draws per point.\n";
  }
  if (!r.at("model").is_null()) {
    out << "\nSelected hidden width: " << r.at("model").at("width") << "\n";
  }
  out << "\nConfig digest: `" << r.at("config_digest").get<std::string>() << "`\n";
  for (const auto& [stage, rec] : r.at("upstream").items()) {
    out << "- " << stage << ": `" << rec.at("stage_digest").get<std::string>() << "`\n";
  }
  const std::string text = out.str();
  io::write_text(art.report(), text);
  return text;
}

json cmd_run(const ExperimentConfig& cfg, const RunOptions& opt) {
  const Artifacts art{opt.out_dir};
  json summary = json::object();
  struct Step {
    Stage stage;
    fs::path artifact;
    json (*fn)(const ExperimentConfig&, const RunOptions&);
  };
  const Step steps[] = {{Stage::simulate, art.observations(), &cmd_simulate},
                        {Stage::labels, art.labels(), &cmd_labels},
                        {Stage::train, art.model(), &cmd_train},
                        {Stage::predict, art.ensemble(), &cmd_predict},
                        {Stage::evaluate, art.metrics(), &cmd_evaluate}};
  RunOptions stage_opt = opt;
  stage_opt.oracle = false;
  for (const Step& s : steps) {
    const std::string name = stage_name(s.stage);
    if (!opt.force && artifact_current(s.artifact, cfg.stage_digest(s.stage))) {
      log_line(opt, name + ": up to date, skipped");
      summary[name] = {{"skipped", true}};
      continue;
    }
    summary[name] = s.fn(cfg, stage_opt);
  }
  cmd_report(cfg, opt);
  return summary;
}

}  // namespace sdeflow::pipeline
