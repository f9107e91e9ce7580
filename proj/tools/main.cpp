#include <CLI11.hpp>
#include <filesystem>
#include <string>
#include <vector>

#include "fedclust/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config;
  fedclust::CliOverrides overrides;
};

void add_common(CLI::App& cmd, CommonArgs& args, bool with_lambda, bool with_rounds) {
  cmd.add_option("--config", args.config, "Experiment file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd.add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t s) { args.overrides.seed = s; },
      "Replace the file's seed list with a single seed");
  cmd.add_option_function<std::string>(
      "--out", [&args](const std::string& dir) { args.overrides.output_dir = dir; },
      "Override the output directory");
  if (with_lambda) {
    cmd.add_option("--lambda", args.overrides.lambdas, "Clustering threshold override");
  }
  if (with_rounds) {
    cmd.add_option_function<int>(
        "--rounds", [&args](int r) { args.overrides.rounds = r; },
        "Override the number of communication rounds");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedclust: deterministic federated-learning simulator with one-shot "
               "weight-based client clustering"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Run the federation per seed and export artifacts");
  add_common(*run, run_args, true, true);

  CommonArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "Sweep the clustering threshold lambda");
  add_common(*sweep, sweep_args, true, true);
  sweep->add_option("--grid", sweep_args.overrides.auto_grid,
                    "Derive an N-point lambda grid from the round-0 dendrogram");

  CommonArgs newcomer_args;
  CLI::App* newcomer =
      app.add_subcommand("newcomer", "Hold out clients, federate the rest, onboard the holdouts");
  add_common(*newcomer, newcomer_args, true, true);

  CommonArgs observe_args;
  CLI::App* observe = app.add_subcommand(
      "observe-layers", "Per-layer proximity matrices and block-structure scores");
  add_common(*observe, observe_args, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are validation errors
  }

  if (run->parsed()) return fedclust::cmd_run(run_args.config, run_args.overrides);
  if (sweep->parsed()) return fedclust::cmd_sweep(sweep_args.config, sweep_args.overrides);
  if (newcomer->parsed())
    return fedclust::cmd_newcomer(newcomer_args.config, newcomer_args.overrides);
  if (observe->parsed())
    return fedclust::cmd_observe_layers(observe_args.config, observe_args.overrides);
  return 1;
}
