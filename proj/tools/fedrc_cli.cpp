// fedrc: synthesize data, inspect aggregation weights, run and compare
// hierarchical federated training experiments.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 divergence.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedrc/commands.hpp"
#include "fedrc/config.hpp"
#include "fedrc/errors.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::string> out;
  std::optional<double> threshold;
};

fedrc::ExperimentConfig effective_config(const Overrides& o) {
  fedrc::ExperimentConfig cfg = fedrc::load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.compare.seeds = {*o.seed};
  }
  if (o.strategy) cfg.strategy.kind = fedrc::parse_strategy(*o.strategy);
  if (o.out) cfg.output_dir = *o.out;
  if (o.threshold) cfg.compare.threshold = *o.threshold;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated learning simulator with Bhattacharyya-distance aggregation weights"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Experiment seed (compare: run only this seed)");
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic multi-city dataset and manifests");
  synth->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* weights = app.add_subcommand("weights", "Print dataset summaries, distances and aggregation weights");
  weights->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Run one experiment and write the metrics CSV");
  add_common(run);
  run->add_option("--strategy", o.strategy, "fedrc or proportion")->check(CLI::IsMember({"fedrc", "proportion"}));

  auto* compare = app.add_subcommand("compare", "Compare strategies over seeds by rounds-to-threshold");
  add_common(compare);
  compare->add_option("--threshold", o.threshold, "Fraction of the best value that counts as converged")
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const fedrc::ExperimentConfig cfg = effective_config(o);
    if (*synth) fedrc::cmd_synth(cfg, std::cout);
    else if (*weights) fedrc::cmd_weights(cfg, std::cout);
    else if (*run) fedrc::cmd_run(cfg, std::cout);
    else if (*compare) fedrc::cmd_compare(cfg, std::cout, fedrc::default_threads());
  } catch (const fedrc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fedrc::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
