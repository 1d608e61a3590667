// sde-flowlearn: config-driven pipeline for learning SDE flow maps from trajectory data.
//
//   sde-flowlearn <subcommand> --config <file> [--workers N] [--out <dir>]
//
// Exit codes: 0 success, 1 I/O or other failure, 2 configuration error or stale
// artifact, 3 numerical failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdeflow/common.hpp"
#include "sdeflow/io.hpp"
#include "sdeflow/parallel.hpp"
#include "sdeflow/pipeline.hpp"
#include "sdeflow/simd/kernels.hpp"

namespace pl = sdeflow::pipeline;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::size_t workers = 0;
};

struct TrainOverrides {
  std::vector<std::size_t> widths;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> split;
  std::optional<std::size_t> batch;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "Experiment config (JSON)")->required();
  cmd->add_option("--out", args.out, "Output directory (default: $SDE_FLOWLEARN_OUT_DIR or ./sde-flowlearn-out)");
  cmd->add_option("--workers", args.workers, "Worker threads (results do not depend on it)");
}

pl::ExperimentConfig load(const CommonArgs& args, const TrainOverrides* train) {
  json doc;
  try {
    doc = json::parse(sdeflow::io::read_text(args.config));
  } catch (const sdeflow::IoError& e) {
    throw sdeflow::ConfigError(e.what());
  } catch (const json::exception& e) {
    throw sdeflow::ConfigError("cannot parse config " + args.config + ": " + e.what());
  }
  if (train && doc.is_object()) {
    json& t = doc["train"];
    if (t.is_null()) t = json::object();
    if (!train->widths.empty()) t["widths"] = train->widths;
    if (train->epochs) t["epochs"] = *train->epochs;
    if (train->lr) t["lr"] = *train->lr;
    if (train->split) t["split"] = *train->split;
    if (train->batch) t["batch"] = *train->batch;
    if (train->seed) t["seed"] = *train->seed;
  }
  return pl::parse_config(doc);
}

pl::RunOptions options(const CommonArgs& args) {
  pl::RunOptions opt;
  opt.out_dir = pl::resolve_out_dir(args.out);
  opt.workers = args.workers == 0 ? sdeflow::default_workers() : args.workers;
  opt.log = &std::cerr;
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn stochastic flow maps of SDEs with a training-free conditional diffusion model"};
  app.require_subcommand(1);

  CommonArgs common;
  TrainOverrides train_over;
  bool oracle = false;
  bool force = false;
  std::string preset_name;
  std::string scale = "desk";

  auto* simulate = app.add_subcommand("simulate", "Simulate trajectories and write the observation pairs");
  auto* labels = app.add_subcommand("labels", "Generate labeled data with the reverse ODE");
  auto* train = app.add_subcommand("train", "Train the flow-map network");
  auto* predict = app.add_subcommand("predict", "Simulate the learned surrogate");
  auto* evaluate = app.add_subcommand("evaluate", "Compute effective-coefficient and moment errors");
  auto* report = app.add_subcommand("report", "Render the metrics as Markdown");
  auto* run = app.add_subcommand("run", "Run all stages, skipping those that are up to date");
  for (auto* cmd : {simulate, labels, train, predict, evaluate, report, run}) add_common(cmd, common);

  train->add_option("--widths", train_over.widths, "Hidden widths to grid-search")->delimiter(',');
  train->add_option("--epochs", train_over.epochs, "Training epochs");
  train->add_option("--lr", train_over.lr, "Adam learning rate");
  train->add_option("--split", train_over.split, "Training fraction of the labels");
  train->add_option("--batch", train_over.batch, "Mini-batch size (0 = full batch)");
  train->add_option("--seed", train_over.seed, "Initialization and split seed");
  evaluate->add_flag("--oracle", oracle, "Evaluate the exact simulator in place of the trained model");
  run->add_flag("--force", force, "Recompute every stage");

  auto* preset = app.add_subcommand("preset", "Inspect benchmark presets");
  preset->require_subcommand(1);
  auto* preset_list = preset->add_subcommand("list", "List benchmarks");
  auto* preset_show = preset->add_subcommand("show", "Print a preset config");
  preset_show->add_option("name", preset_name, "Benchmark name")->required();
  preset_show->add_option("--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (preset_list->parsed()) {
      for (const auto& name : sdeflow::benchmark_names()) std::cout << name << '\n';
      return 0;
    }
    if (preset_show->parsed()) {
      std::cout << pl::preset_config(preset_name, pl::parse_scale(scale)).dump(2) << '\n';
      return 0;
    }

    const pl::ExperimentConfig cfg = load(common, train->parsed() ? &train_over : nullptr);
    pl::RunOptions opt = options(common);
    opt.oracle = oracle;
    opt.force = force;
    std::cerr << "kernels: " << sdeflow::simd::isa_name(sdeflow::simd::active_isa())
              << ", workers: " << opt.workers << ", out: " << opt.out_dir.string() << '\n';

    json result;
    if (simulate->parsed()) result = pl::cmd_simulate(cfg, opt);
    if (labels->parsed()) result = pl::cmd_labels(cfg, opt);
    if (train->parsed()) result = pl::cmd_train(cfg, opt);
    if (predict->parsed()) result = pl::cmd_predict(cfg, opt);
    if (evaluate->parsed()) {
      result = pl::cmd_evaluate(cfg, opt);
      std::cout << result.at("metrics").dump(2) << '\n';
      return 0;
    }
    if (report->parsed()) {
      std::cout << pl::cmd_report(cfg, opt);
      return 0;
    }
    if (run->parsed()) result = pl::cmd_run(cfg, opt);
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const sdeflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const sdeflow::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
