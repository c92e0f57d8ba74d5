#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "tmerr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Transport-map inversion with model-error correction"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "train or sample according to a config file");
  run->add_option("config", run_config, "config file")->required();

  std::string oracle_config;
  auto* oracle = app.add_subcommand("oracle", "grid oracles (exact, reduced, fixed point) for a config");
  oracle->add_option("config", oracle_config, "config file")->required();

  tmerr::BiasDemoConfig bias;
  std::string bias_out = ".";
  auto* demo = app.add_subcommand("bias-demo", "Jensen vs nested estimator curves for the toy example");
  demo->add_option("--s", bias.s, "total sample budget")->capture_default_str();
  demo->add_option("--runs", bias.runs, "repetitions")->capture_default_str();
  demo->add_option("--w-lo", bias.w_grid.lo, "grid start")->capture_default_str();
  demo->add_option("--w-hi", bias.w_grid.hi, "grid end")->capture_default_str();
  demo->add_option("--w-points", bias.w_grid.n_points, "grid points")->capture_default_str();
  demo->add_option("--seed", bias.seed, "seed")->capture_default_str();
  demo->add_option("--out", bias_out, "output directory (OUTPUT_DIR wins)")->capture_default_str();

  std::vector<std::string> traces;
  auto* cost = app.add_subcommand("cost-report", "compare measured counters with the closed-form counts");
  cost->add_option("traces", traces, "trace.csv files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tmerr::cli::kExitConfig;
  }

  if (*run) return tmerr::cli::cmd_run(run_config, std::cout, std::cerr);
  if (*oracle) return tmerr::cli::cmd_oracle(oracle_config, std::cout, std::cerr);
  if (*demo) return tmerr::cli::cmd_bias_demo(bias, bias_out, std::cout, std::cerr);
  return tmerr::cli::cmd_cost_report(traces, std::cout, std::cerr);
}
