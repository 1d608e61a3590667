#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdeflow/flowmap_net.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kMetricsSchema = "sde-flowlearn.metrics/1";
inline constexpr const char* kOutDirEnv = "SDE_FLOWLEARN_OUT_DIR";

enum class Scale { desk, full };
Scale parse_scale(const std::string& s);

enum class Stage { simulate, labels, train, predict, evaluate };
const char* stage_name(Stage s);

struct GridSpec {
  bool automatic = true;  // central 90% of observed states
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 100;
};

/// Fully resolved experiment: preset defaults with the user's blocks merged on top.
struct ExperimentConfig {
  std::string benchmark;
  ParamMap overrides;

  struct {
    std::size_t H = 0;
    std::size_t L = 0;
    double dt = 0.0;
    std::vector<double> init_lo;
    std::vector<double> init_hi;
    std::uint64_t seed = 0;
  } simulate;

  struct {
    std::size_t J = 0;
    std::size_t K = 0;
    double fraction = 0.01;
    double nu = 1.0;
    std::uint64_t seed = 0;
  } labels;

  TrainOptions train;

  struct {
    std::vector<double> x0;
    std::size_t steps = 0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
  } predict;

  struct {
    GridSpec grid;
    std::size_t n_z = 100000;
    std::size_t bins = 40;
    std::size_t min_count = 200;
    double T = 0.0;
    std::uint64_t seed = 0;
    double well_barrier = 0.0;
  } evaluate;

  /// Normalized JSON of every block; stage digests hash prefixes of it.
  json normalized;

  std::string config_digest() const;
  /// Chained digest: the stage's own block plus the digest of the stage before it.
  std::string stage_digest(Stage s) const;
};

/// Default configuration for a benchmark at desk or full scale.
json preset_config(const std::string& benchmark, Scale scale);

/// Resolves a user config document (validates keys, counts and shapes). Throws ConfigError.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const fs::path& path);

struct RunOptions {
  fs::path out_dir;
  std::size_t workers = 1;
  bool force = false;   // run: recompute even up-to-date stages
  bool oracle = false;  // evaluate: use the exact simulator in place of the trained model
  std::ostream* log = nullptr;
};

/// Output directory from an explicit value, the environment override, or ./sde-flowlearn-out.
fs::path resolve_out_dir(const std::string& explicit_dir);

struct Artifacts {
  fs::path dir;
  fs::path observations() const { return dir / "observations.sdeobs"; }
  fs::path labels() const { return dir / "labels.sdelab"; }
  fs::path model() const { return dir / "model.sdemlp"; }
  fs::path ensemble() const { return dir / "ensemble.sdeens"; }
  fs::path metrics() const { return dir / "metrics.json"; }
  fs::path oracle_metrics() const { return dir / "metrics.oracle.json"; }
  fs::path report() const { return dir / "report.md"; }
};

/// Each stage verifies its upstream artifact against the current config (StaleArtifactError
/// on mismatch), writes its artifact plus a .meta.json provenance sidecar and returns a summary.
json cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt);
json cmd_labels(const ExperimentConfig& cfg, const RunOptions& opt);
json cmd_train(const ExperimentConfig& cfg, const RunOptions& opt);
json cmd_predict(const ExperimentConfig& cfg, const RunOptions& opt);
json cmd_evaluate(const ExperimentConfig& cfg, const RunOptions& opt);
/// Renders metrics.json as a Markdown summary (report.md) and returns its text.
std::string cmd_report(const ExperimentConfig& cfg, const RunOptions& opt);

/// All stages in order; stages whose artifact is current are skipped unless opt.force.
json cmd_run(const ExperimentConfig& cfg, const RunOptions& opt);

/// True if the artifact exists and its sidecar matches the stage digest and file hash.
bool artifact_current(const fs::path& artifact, const std::string& stage_digest);

std::string file_sha256(const fs::path& path);

}  // namespace sdeflow::pipeline
