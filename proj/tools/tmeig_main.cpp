#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "tmeig/experiment.hpp"
#include "tmeig/version.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config, "Experiment config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args->seed, "Override the config's base seed");
  cmd->add_option("--workers", args->workers, "Worker thread count")->check(CLI::PositiveNumber);
  cmd->add_option("--out", args->out, "Override the output directory");
}

int run(const CommonArgs& args, const std::string& expected_experiment, bool nmc_only) {
  tmeig::ExperimentConfig config;
  try {
    config = tmeig::load_config(args.config);
  } catch (const tmeig::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  if (!expected_experiment.empty() && config.experiment != expected_experiment) {
    std::fprintf(stderr, "config error: config.experiment: expected \"%s\", got \"%s\"\n",
                 expected_experiment.c_str(), config.experiment.c_str());
    return 2;
  }
  if (nmc_only) {
    if (config.experiment == "dimred-grid") {
      std::fprintf(stderr, "config error: config.experiment: nmc needs an estimator config\n");
      return 2;
    }
    config.kinds = {tmeig::EigKind::Nmc};
  }

  tmeig::RunOptions options;
  options.seed = args.seed;
  options.workers = args.workers;
  options.out = args.out;

  try {
    const tmeig::RunResult result =
        tmeig::run_config(config, tmeig::file_sha256(args.config), options);
    std::printf("%d cells, %d failed, results in %s\n", result.n_cells, result.n_failed,
                result.out_dir.c_str());
    return result.n_failed > 0 ? 1 : 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transport-map estimators of expected information gain"};
  app.set_version_flag("--version", tmeig::kVersion);
  app.require_subcommand(1);

  CommonArgs estimate_args, sweep_args, dimred_args, nmc_args, validate_args;

  CLI::App* estimate = app.add_subcommand("estimate", "One-shot EIG estimates at a fixed budget");
  add_common(estimate, &estimate_args);

  CLI::App* sweep = app.add_subcommand("sweep", "Convergence study over a budget grid");
  add_common(sweep, &sweep_args);

  CLI::App* dimred = app.add_subcommand("dimred", "Projected EIG over a basis/(r, s) grid");
  add_common(dimred, &dimred_args);

  CLI::App* nmc = app.add_subcommand("nmc", "Nested Monte Carlo baseline");
  add_common(nmc, &nmc_args);

  CLI::App* validate = app.add_subcommand("validate", "Schema-check a config and exit");
  add_common(validate, &validate_args);

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    try {
      tmeig::load_config(validate_args.config);
      std::printf("ok\n");
      return 0;
    } catch (const tmeig::ConfigError& e) {
      std::fprintf(stderr, "config error: %s\n", e.what());
      return 2;
    }
  }
  if (estimate->parsed()) return run(estimate_args, "", false);
  if (sweep->parsed()) return run(sweep_args, "allocation-sweep", false);
  if (dimred->parsed()) return run(dimred_args, "dimred-grid", false);
  if (nmc->parsed()) return run(nmc_args, "", true);
  return 0;
}
