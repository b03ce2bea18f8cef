#include "fedrc/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "fedrc/errors.hpp"

namespace fedrc {

namespace {

std::string num(double v, const char* format = "%.12g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string fixed2(double v) { return num(v, "%.2f"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("failed writing " + path.string());
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

struct RunOutcome {
  std::vector<RoundRecord> log;
  ModelParams model;
};

RunOutcome execute(const ExperimentConfig& cfg, std::shared_ptr<const FederatedDataset> data) {
  Experiment ex = Experiment::initialize(std::move(data), cfg.schedule, cfg.strategy, cfg.training, cfg.seed);
  auto log = ex.run();
  return {std::move(log), ex.global_model()};
}

std::shared_ptr<const FederatedDataset> load_data(const ExperimentConfig& cfg) {
  return std::make_shared<const FederatedDataset>(
      load_federated_dataset(cfg.data.train_path(), cfg.data.test_path(), cfg.training.model.classes));
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

SynthResult cmd_synth(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  const SynthConfig& s = cfg.synth;
  const std::filesystem::path root(cfg.data.dir);
  std::filesystem::create_directories(root / "train");
  std::filesystem::create_directories(root / "test");

  const Topology topology = Topology::uniform(s.cities.size(), s.vehicles_per_city);
  SynthResult result;
  for (std::size_t c = 0; c < s.cities.size(); ++c) {
    const auto samples =
        synthesize_city(s.cities[c], s.train_per_city + s.test_per_city, s.width, s.height, stream_key(s.seed, c));
    std::vector<SamplePaths> train_paths;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const bool is_train = i < s.train_per_city;
      const std::string stem = (is_train ? "train/" : "test/") + ("c" + std::to_string(c) + "_" + std::to_string(i));
      SamplePaths paths{stem + ".ppm", stem + "_mask.pgm"};
      write_image_ppm(root / paths.image_path, samples[i].image);
      write_mask_pgm(root / paths.mask_path, samples[i].mask);
      if (is_train) train_paths.push_back(std::move(paths));
      else result.test.push_back({paths.image_path, paths.mask_path, -1, -1});
    }
    const Topology city_edge({topology.edges()[c]});
    const SplitScheme scheme =
        s.split == SplitScheme::Kind::Skewed ? SplitScheme::skewed(s.sizes[c]) : SplitScheme::equal();
    const Manifest rows = split_manifest(train_paths, city_edge, scheme);
    result.train.insert(result.train.end(), rows.begin(), rows.end());
  }
  write_manifest(cfg.data.train_path(), result.train);
  write_manifest(cfg.data.test_path(), result.test);

  out << "wrote " << result.train.size() << " training and " << result.test.size() << " test images to "
      << root.string() << "\n";
  for (const auto& edge : topology.edges()) {
    out << "edge " << edge.id << " (shift " << num(s.cities[edge.id].shift) << "):";
    for (VehicleId v : edge.vehicles) {
      const auto n = std::count_if(result.train.begin(), result.train.end(),
                                   [v](const ManifestRow& r) { return r.vehicle_id == static_cast<std::int64_t>(v); });
      out << " vehicle " << v << "=" << n;
    }
    out << "\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// weights

void cmd_weights(const ExperimentConfig& cfg, std::ostream& out) {
  const auto data = load_data(cfg);
  const HierarchySummaries sums = summarize(*data);
  const StrategyChoice prop{StrategyKind::Proportion, cfg.strategy.epsilon};
  const StrategyChoice rc{StrategyKind::FedRC, cfg.strategy.epsilon};
  const HierarchyWeights wp = resolve_hierarchy_weights(data->topology, sums, prop);
  const HierarchyWeights wr = resolve_hierarchy_weights(data->topology, sums, rc);

  auto describe = [](const Summary& s) {
    return "n=" + std::to_string(s.n) + " mu=" + num(s.mu, "%.4f") + " var=" + num(s.var, "%.6g");
  };

  out << "legend: ID-size-proportion-fedrc\n";
  std::size_t next = 0;
  const auto& edges = data->topology.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out << "Edge" << e + 1 << "-" << sums.edges[e].n << "  " << describe(sums.edges[e]) << "\n";
    for (std::size_t c = 0; c < edges[e].vehicles.size(); ++c, ++next) {
      const Summary& v = sums.vehicles[next];
      out << "  Client{" << c + 1 << "," << e + 1 << "}-" << v.n << "-" << fixed2(wp.edges[e][c]) << "-"
          << fixed2(wr.edges[e][c]) << "  " << describe(v) << " BD=" << num(floored_distance(v, sums.edges[e]), "%.6g")
          << "\n";
    }
  }
  out << "Cloud-" << sums.cloud.n << "  " << describe(sums.cloud) << "\n";
  for (std::size_t e = 0; e < edges.size(); ++e)
    out << "  Edge" << e + 1 << "-" << sums.edges[e].n << "-" << fixed2(wp.cloud[e]) << "-" << fixed2(wr.cloud[e])
        << "  BD=" << num(floored_distance(sums.edges[e], sums.cloud), "%.6g") << "\n";
}

// ---------------------------------------------------------------------------
// run

std::string metrics_csv(const std::vector<RoundRecord>& log, StrategyKind strategy, std::uint64_t seed) {
  std::string csv = std::string(kMetricsHeader) + "\n";
  for (const auto& r : log) {
    csv += std::to_string(r.round) + "," + std::string(to_string(strategy)) + "," + std::to_string(seed) + "," +
           num(r.scores.miou) + "," + num(r.scores.mpre) + "," + num(r.scores.mrec) + "," + num(r.scores.mf1) + "," +
           num(r.train_loss) + "\n";
  }
  return csv;
}

std::vector<RoundRecord> run_in_memory(const ExperimentConfig& cfg, std::shared_ptr<const FederatedDataset> data) {
  return execute(cfg, std::move(data)).log;
}

RunResult cmd_run(const ExperimentConfig& cfg, std::ostream& out, const std::filesystem::path& out_dir) {
  cfg.validate();
  const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(cfg.output_dir) : out_dir;
  std::filesystem::create_directories(dir);
  save_config(dir / "config.json", cfg);

  RunOutcome outcome = execute(cfg, load_data(cfg));
  RunResult result{std::move(outcome.log), dir / "metrics.csv", dir / "model.frcm"};
  write_text(result.csv_path, metrics_csv(result.log, cfg.strategy.kind, cfg.seed));
  save_checkpoint(result.checkpoint_path, outcome.model, cfg.training.model);

  const auto& last = result.log.back();
  out << to_string(cfg.strategy.kind) << " seed " << cfg.seed << ": " << result.log.size() << " rounds, final mIoU "
      << num(last.scores.miou, "%.4f") << " mPre " << num(last.scores.mpre, "%.4f") << " mRec "
      << num(last.scores.mrec, "%.4f") << " mF1 " << num(last.scores.mf1, "%.4f") << "\n"
      << "wrote " << result.csv_path.string() << "\n";
  return result;
}

// ---------------------------------------------------------------------------
// compare

std::optional<std::size_t> rounds_to_threshold(std::span<const double> curve, double target) {
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve[i] >= target) return i + 1;
  return std::nullopt;
}

double relative_speedup(double baseline_rounds, double candidate_rounds) {
  if (!(baseline_rounds > 0.0)) throw std::invalid_argument("baseline rounds must be positive");
  return (baseline_rounds - candidate_rounds) / baseline_rounds;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::MIoU: return "mIoU";
    case Metric::MPre: return "mPre";
    case Metric::MRec: return "mRec";
    case Metric::MF1: return "mF1";
  }
  return "?";
}

double metric_value(const SegmentationScores& s, Metric m) {
  switch (m) {
    case Metric::MIoU: return s.miou;
    case Metric::MPre: return s.mpre;
    case Metric::MRec: return s.mrec;
    case Metric::MF1: return s.mf1;
  }
  return 0.0;
}

CompareReport compare_strategies(const ExperimentConfig& cfg, std::shared_ptr<const FederatedDataset> data,
                                 std::size_t threads) {
  cfg.validate();
  CompareReport report;
  report.strategies = cfg.compare.strategies;
  report.seeds = cfg.compare.seeds;
  report.threshold = cfg.compare.threshold;
  report.rounds = cfg.schedule.rounds;
  const std::size_t ns = report.strategies.size();
  const std::size_t nseeds = report.seeds.size();
  report.logs.assign(ns, std::vector<std::vector<RoundRecord>>(nseeds));

  // Cells are independent deterministic jobs; results land in fixed slots.
  const std::size_t cells = ns * nseeds;
  std::vector<std::exception_ptr> errors(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++) {
      const std::size_t s = i / nseeds;
      const std::size_t k = i % nseeds;
      try {
        ExperimentConfig cell = cfg;
        cell.strategy.kind = report.strategies[s];
        cell.seed = report.seeds[k];
        report.logs[s][k] = run_in_memory(cell, data);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    const std::size_t n = std::clamp<std::size_t>(threads, 1, cells);
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double censored = static_cast<double>(report.rounds + 1);
  for (Metric m : kMetrics) {
    MetricComparison mc;
    mc.metric = m;
    mc.rounds.assign(ns, std::vector<std::optional<std::size_t>>(nseeds));
    for (std::size_t k = 0; k < nseeds; ++k) {
      double best = -1.0;
      std::vector<std::vector<double>> curves(ns);
      for (std::size_t s = 0; s < ns; ++s) {
        for (const auto& r : report.logs[s][k]) curves[s].push_back(metric_value(r.scores, m));
        best = std::max(best, *std::max_element(curves[s].begin(), curves[s].end()));
      }
      for (std::size_t s = 0; s < ns; ++s) mc.rounds[s][k] = rounds_to_threshold(curves[s], report.threshold * best);
      if (ns >= 2 && mc.rounds[0][k] && mc.rounds[1][k])
        mc.speedups.push_back(relative_speedup(static_cast<double>(*mc.rounds[0][k]), static_cast<double>(*mc.rounds[1][k])));
    }
    for (std::size_t s = 0; s < ns; ++s) {
      std::vector<double> r;
      for (const auto& v : mc.rounds[s]) r.push_back(v ? static_cast<double>(*v) : censored);
      mc.median_rounds.push_back(median(r));
    }
    if (!mc.speedups.empty()) mc.median_speedup = median(mc.speedups);
    report.metrics.push_back(std::move(mc));
  }
  for (std::size_t s = 0; s < ns; ++s) {
    double total = 0.0;
    for (const auto& log : report.logs[s]) total += log.back().scores.miou;
    report.mean_final_miou.push_back(total / static_cast<double>(nseeds));
  }
  return report;
}

void CompareReport::print(std::ostream& out) const {
  out << "rounds to " << num(threshold * 100.0, "%.4g") << "% of the best value reached per seed (R = " << rounds
      << ", unreached counted as " << rounds + 1 << " in medians)\n";
  std::string header = pad("metric", 7) + pad("seed", 8);
  for (auto s : strategies) header += pad(std::string(to_string(s)), 12);
  if (strategies.size() >= 2) header += "speedup";
  out << header << "\n";
  for (const auto& mc : metrics) {
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      std::string line = pad(std::string(metric_name(mc.metric)), 7) + pad(std::to_string(seeds[k]), 8);
      for (std::size_t s = 0; s < strategies.size(); ++s)
        line += pad(mc.rounds[s][k] ? std::to_string(*mc.rounds[s][k]) : "not reached", 12);
      if (strategies.size() >= 2 && mc.rounds[0][k] && mc.rounds[1][k])
        line += num(100.0 * relative_speedup(static_cast<double>(*mc.rounds[0][k]), static_cast<double>(*mc.rounds[1][k])),
                    "%.2f") + "%";
      out << line << "\n";
    }
  }
  out << "summary\n";
  for (const auto& mc : metrics) {
    out << "  " << pad(std::string(metric_name(mc.metric)), 5) << " median rounds:";
    for (std::size_t s = 0; s < strategies.size(); ++s) out << " " << to_string(strategies[s]) << "=" << num(mc.median_rounds[s]);
    if (mc.median_speedup) out << "  median speedup " << num(100.0 * *mc.median_speedup, "%.2f") << "%";
    else if (strategies.size() >= 2) out << "  median speedup n/a";
    out << "\n";
  }
  out << "  final mIoU (mean over seeds):";
  for (std::size_t s = 0; s < strategies.size(); ++s) out << " " << to_string(strategies[s]) << "=" << num(mean_final_miou[s], "%.4f");
  out << "\n";
}

CompareReport cmd_compare(const ExperimentConfig& cfg, std::ostream& out, std::size_t threads) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  save_config(dir / "config.json", cfg);

  CompareReport report = compare_strategies(cfg, load_data(cfg), threads);
  for (std::size_t s = 0; s < report.strategies.size(); ++s)
    for (std::size_t k = 0; k < report.seeds.size(); ++k) {
      const auto name = std::string(to_string(report.strategies[s])) + "_seed" + std::to_string(report.seeds[k]) + ".csv";
      write_text(dir / name, metrics_csv(report.logs[s][k], report.strategies[s], report.seeds[k]));
    }
  std::ostringstream text;
  report.print(text);
  write_text(dir / "compare.txt", text.str());
  out << text.str();
  return report;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("FEDRC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace fedrc
