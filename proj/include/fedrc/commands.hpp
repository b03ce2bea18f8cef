#pragma once

// Library side of the `fedrc` subcommands, so that tests drive exactly the
// code paths the CLI runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fedrc/config.hpp"
#include "fedrc/hfl_sim.hpp"

namespace fedrc {

struct SynthResult {
  Manifest train;
  Manifest test;
};

/// Generates every city, writes PPM/PGM files plus both manifests under
/// cfg.data.dir, and prints a per-vehicle summary.
SynthResult cmd_synth(const ExperimentConfig& cfg, std::ostream& out);

/// Prints per-tier summaries, distances and both strategies' weights in the
/// `Client{c,e}-size-proportion-fedrc` legend style.
void cmd_weights(const ExperimentConfig& cfg, std::ostream& out);

inline constexpr const char* kMetricsHeader = "round,strategy,seed,mIoU,mPre,mRec,mF1,train_loss";

std::string metrics_csv(const std::vector<RoundRecord>& log, StrategyKind strategy, std::uint64_t seed);

struct RunResult {
  std::vector<RoundRecord> log;
  std::filesystem::path csv_path;
  std::filesystem::path checkpoint_path;
};

/// Runs one experiment and writes metrics.csv, config.json and model.frcm to
/// `out_dir` (cfg.output_dir when empty).
RunResult cmd_run(const ExperimentConfig& cfg, std::ostream& out, const std::filesystem::path& out_dir = {});

/// Same as cmd_run on an already loaded dataset, without touching disk.
std::vector<RoundRecord> run_in_memory(const ExperimentConfig& cfg, std::shared_ptr<const FederatedDataset> data);

/// First 1-based round whose value reaches `target`.
std::optional<std::size_t> rounds_to_threshold(std::span<const double> curve, double target);

/// (baseline - candidate) / baseline.
double relative_speedup(double baseline_rounds, double candidate_rounds);

double median(std::vector<double> values);

enum class Metric { MIoU, MPre, MRec, MF1 };
inline constexpr Metric kMetrics[] = {Metric::MIoU, Metric::MPre, Metric::MRec, Metric::MF1};
std::string_view metric_name(Metric m);
double metric_value(const SegmentationScores& s, Metric m);

struct MetricComparison {
  Metric metric = Metric::MIoU;
  /// [strategy][seed]; nullopt when the threshold was never reached.
  std::vector<std::vector<std::optional<std::size_t>>> rounds;
  /// Median over seeds, unreached runs censored at R + 1.
  std::vector<double> median_rounds;
  /// Per-seed (baseline - candidate)/baseline where both reached; empty when
  /// fewer than two strategies ran.
  std::vector<double> speedups;
  std::optional<double> median_speedup;
};

struct CompareReport {
  std::vector<StrategyKind> strategies;
  std::vector<std::uint64_t> seeds;
  double threshold = 0.95;
  std::size_t rounds = 0;
  std::vector<std::vector<std::vector<RoundRecord>>> logs;  ///< [strategy][seed]
  std::vector<MetricComparison> metrics;
  std::vector<double> mean_final_miou;  ///< per strategy

  void print(std::ostream& out) const;
};

/// Runs every (strategy, seed) cell and reports rounds-to-threshold against
/// the best value either strategy reached for that seed. The first
/// strategy is the baseline. Cells run on up to `threads` workers.
CompareReport compare_strategies(const ExperimentConfig& cfg, std::shared_ptr<const FederatedDataset> data,
                                 std::size_t threads);

/// Loads the dataset, runs compare_strategies, writes per-cell CSVs and
/// compare.txt under the output directory, and prints the report.
CompareReport cmd_compare(const ExperimentConfig& cfg, std::ostream& out, std::size_t threads);

/// FEDRC_THREADS if set and positive, else hardware concurrency.
std::size_t default_threads();

}  // namespace fedrc
