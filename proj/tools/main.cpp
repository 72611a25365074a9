// dpmlds: run inference experiments for linear dynamic models with
// Dirichlet process mixture noise.
//
//   dpmlds <mode> --config PATH [--seed U64] [--out DIR] [--quiet]
//
// mode is one of mcmc, rbpf, deconv-bench, changepoint, simulate.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dpmlds/errors.hpp"
#include "dpmlds/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference for linear dynamic models with DPM noise"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool quiet = false;

  for (const char* name : {"mcmc", "rbpf", "deconv-bench", "changepoint", "simulate"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " mode");
    sub->add_option("--config", config_path, "JSON experiment configuration")->required();
    sub->add_option("--seed", seed, "seed overriding the configuration");
    sub->add_option("--out", out_dir, "output directory overriding io.output");
    sub->add_flag("--quiet", quiet, "suppress progress and warnings");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  dpmlds::RunOptions options;
  options.mode = dpmlds::parse_mode(sub->get_name());
  options.quiet = quiet;
  if (sub->count("--seed")) options.seed = seed;
  if (sub->count("--out")) options.out_dir = out_dir;
  return dpmlds::run(config_path, options);
}
