// dlfm: fit discrete latent factor models, generate the reference datasets and
// rerun the reference experiments.

#include "dlfm/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace dlfm::cli;
  CLI::App app{"Fit discrete latent factor models by block coordinate descent"};
  app.require_subcommand(1);

  Overrides flags;
  std::uint64_t seed = 0;
  int restarts = 0;
  double eps = 0.0;
  int max_iter = 0;
  auto add_controls = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "RNG seed (overrides the config)");
    cmd->add_option("--restarts", restarts, "number of random restarts")->check(CLI::PositiveNumber);
    cmd->add_option("--eps", eps, "termination threshold")->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-iter", max_iter, "BCD iteration cap per restart")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", flags.jobs, "worker threads for restarts (default: logical processors)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_flag("--quiet", flags.quiet, "suppress progress output");
  };

  std::string config_path, data_path, out_path;
  auto* fit = app.add_subcommand("fit", "fit a model described by a JSON config to a CSV dataset");
  fit->add_option("--config", config_path, "model config (JSON)")->required();
  fit->add_option("--data", data_path, "dataset (CSV)")->required();
  fit->add_option("--out", out_path, "result file (JSON)")->required();
  add_controls(fit);

  std::string experiment;
  std::uint64_t synth_seed = 1;
  bool synth_quiet = false;
  auto* synth = app.add_subcommand("synth", "write a reference dataset with its truth sidecars");
  synth->add_option("experiment", experiment, "constrained_kmeans | mixture_linreg | forgetting_q | io_hmm")
      ->required();
  synth->add_option("--seed", synth_seed, "RNG seed");
  synth->add_option("--out", out_path, "dataset path (CSV)")->required();
  synth->add_flag("--quiet", synth_quiet, "suppress progress output");

  std::string out_dir;
  auto* repro = app.add_subcommand("repro", "rerun a reference experiment and write metrics and plot data");
  repro->add_option("experiment", experiment, "constrained_kmeans | mixture_linreg | forgetting_q | io_hmm")
      ->required();
  repro->add_option("--out", out_dir, "output directory")->required();
  add_controls(repro);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  for (auto* cmd : {fit, repro}) {
    if (cmd->count("--seed")) flags.seed = seed;
    if (cmd->count("--restarts")) flags.restarts = restarts;
    if (cmd->count("--eps")) flags.eps = eps;
    if (cmd->count("--max-iter")) flags.max_iter = max_iter;
  }

  if (*fit) return cmd_fit(config_path, data_path, out_path, flags, std::cout, std::cerr);
  if (*synth) return cmd_synth(experiment, synth_seed, out_path, std::cout, std::cerr, synth_quiet);
  return cmd_repro(experiment, out_dir, flags, std::cout, std::cerr);
}
