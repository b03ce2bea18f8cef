#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fedrc/commands.hpp"

using namespace fedrc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct Workspace {
  std::filesystem::path root;
  explicit Workspace(const std::string& name) : root(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(root);
  }
  ~Workspace() { std::filesystem::remove_all(root); }
};

// Tiny three-city scenario that trains in well under a second.
ExperimentConfig small_config(const std::filesystem::path& root) {
  ExperimentConfig cfg;
  cfg.data.dir = (root / "data").string();
  cfg.output_dir = (root / "out").string();
  cfg.synth.width = 10;
  cfg.synth.height = 10;
  cfg.synth.train_per_city = 6;
  cfg.synth.test_per_city = 2;
  cfg.schedule = {2, 2, 3};
  cfg.training.batch_images = 2;
  cfg.training.pixels_per_image = 16;
  return cfg;
}

}  // namespace

TEST_CASE("rounds_to_threshold") {
  const std::vector<double> curve{0.1, 0.4, 0.6, 0.55, 0.9};
  CHECK(rounds_to_threshold(curve, 0.5) == 3u);
  CHECK(rounds_to_threshold(curve, 0.1) == 1u);
  CHECK(rounds_to_threshold(curve, 0.9) == 5u);
  CHECK_FALSE(rounds_to_threshold(curve, 0.95).has_value());
  CHECK_FALSE(rounds_to_threshold(std::vector<double>{}, 0.0).has_value());
}

TEST_CASE("relative speedup and median") {
  CHECK(relative_speedup(31, 19) == doctest::Approx(12.0 / 31.0).epsilon(1e-15));
  CHECK(std::round(relative_speedup(31, 19) * 10000) / 100 == 38.71);
  CHECK(relative_speedup(20, 20) == 0.0);
  CHECK(relative_speedup(10, 15) == doctest::Approx(-0.5));
  CHECK_THROWS(relative_speedup(0, 1));
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("metrics CSV format") {
  RoundRecord r;
  r.round = 1;
  r.scores = {0.25, 0.5, 1.0 / 3.0, 0.1};
  r.train_loss = 1.5;
  const auto csv = metrics_csv({r}, StrategyKind::FedRC, 7);
  CHECK(csv == "round,strategy,seed,mIoU,mPre,mRec,mF1,train_loss\n1,fedrc,7,0.25,0.5,0.333333333333,0.1,1.5\n");
}

TEST_CASE("synth writes a deterministic dataset") {
  Workspace ws("fedrc_cmd_synth");
  auto cfg = small_config(ws.root);
  std::ostringstream log;
  const auto first = cmd_synth(cfg, log);
  CHECK(first.train.size() == 18);
  CHECK(first.test.size() == 6);
  CHECK(log.str().find("vehicle 0=3") != std::string::npos);
  const auto manifest = slurp(cfg.data.train_path());
  const auto image = slurp(std::filesystem::path(cfg.data.dir) / first.train[4].image_path);
  CHECK(read_manifest(cfg.data.train_path()) == first.train);
  CHECK(read_manifest(cfg.data.test_path()) == first.test);

  std::ostringstream again;
  cmd_synth(cfg, again);
  CHECK(slurp(cfg.data.train_path()) == manifest);
  CHECK(slurp(std::filesystem::path(cfg.data.dir) / first.train[4].image_path) == image);

  const auto data = load_federated_dataset(cfg.data.train_path(), cfg.data.test_path(), 4);
  CHECK(data.topology == Topology::uniform(3, 2));
  CHECK(data.shards[5].size() == 3);
}

TEST_CASE("synth honours skewed sizes") {
  Workspace ws("fedrc_cmd_skew");
  auto cfg = small_config(ws.root);
  cfg.synth.split = SplitScheme::Kind::Skewed;
  cfg.synth.sizes = {{5, 1}, {3, 3}, {2, 4}};
  std::ostringstream log;
  cmd_synth(cfg, log);
  const auto data = load_federated_dataset(cfg.data.train_path(), cfg.data.test_path(), 4);
  CHECK(data.shards[0].size() == 5);
  CHECK(data.shards[1].size() == 1);
  CHECK(data.shards[5].size() == 4);
}

TEST_CASE("weights report") {
  Workspace ws("fedrc_cmd_weights");
  SUBCASE("578 / 503 split") {
    auto cfg = small_config(ws.root);
    cfg.synth.width = cfg.synth.height = 2;
    cfg.synth.cities = {CityProfile::street()};
    cfg.synth.train_per_city = 1081;
    cfg.synth.test_per_city = 1;
    cfg.synth.split = SplitScheme::Kind::Skewed;
    cfg.synth.sizes = {{578, 503}};
    std::ostringstream log;
    cmd_synth(cfg, log);
    std::ostringstream out;
    cmd_weights(cfg, out);
    CHECK(out.str().find("Client{1,1}-578-0.53-") != std::string::npos);
    CHECK(out.str().find("Client{2,1}-503-0.47-") != std::string::npos);
    CHECK(out.str().find("Edge1-1081-1.00-1.00") != std::string::npos);
  }
  SUBCASE("single vehicle") {
    auto cfg = small_config(ws.root);
    cfg.synth.cities = {CityProfile::street()};
    cfg.synth.vehicles_per_city = 1;
    std::ostringstream log;
    cmd_synth(cfg, log);
    std::ostringstream out;
    cmd_weights(cfg, out);
    CHECK(out.str().find("Client{1,1}-6-1.00-1.00") != std::string::npos);
  }
}

TEST_CASE("run writes metrics, config and checkpoint") {
  Workspace ws("fedrc_cmd_run");
  auto cfg = small_config(ws.root);
  std::ostringstream log;
  cmd_synth(cfg, log);

  cfg.schedule.rounds = 1;
  const auto one = cmd_run(cfg, log, ws.root / "one");
  CHECK(one.log.size() == 1);
  const auto csv = slurp(one.csv_path);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.rfind(std::string(kMetricsHeader) + "\n1,fedrc,1,", 0) == 0);
  CHECK(load_checkpoint(one.checkpoint_path).config == cfg.training.model);
  CHECK(config_to_json(load_config(ws.root / "one" / "config.json")) == config_to_json(cfg));

  cfg.schedule.rounds = 3;
  const auto a = cmd_run(cfg, log, ws.root / "a");
  const auto b = cmd_run(cfg, log, ws.root / "b");
  CHECK(a.log.size() == 3);
  CHECK(slurp(a.csv_path) == slurp(b.csv_path));
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
}

TEST_CASE("strategies agree on identical i.i.d. shards") {
  Workspace ws("fedrc_cmd_iid");
  auto cfg = small_config(ws.root);
  cfg.synth.cities = {CityProfile::street()};
  cfg.synth.vehicles_per_city = 3;
  std::ostringstream log;
  cmd_synth(cfg, log);
  auto loaded = load_federated_dataset(cfg.data.train_path(), cfg.data.test_path(), 4);
  // Same images on every vehicle so the summaries coincide exactly.
  for (auto& shard : loaded.shards) shard = loaded.shards[0];
  const auto data = std::make_shared<const FederatedDataset>(std::move(loaded));

  cfg.compare.seeds = {1, 2};
  const auto report = compare_strategies(cfg, data, 2);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t r = 0; r < cfg.schedule.rounds; ++r) {
      const auto& p = report.logs[0][k][r].scores;
      const auto& f = report.logs[1][k][r].scores;
      CHECK(std::abs(p.miou - f.miou) <= 1e-9);
      CHECK(std::abs(p.mpre - f.mpre) <= 1e-9);
      CHECK(std::abs(p.mrec - f.mrec) <= 1e-9);
      CHECK(std::abs(p.mf1 - f.mf1) <= 1e-9);
    }
  const auto& miou = report.metrics[0];
  CHECK(miou.median_rounds[0] == miou.median_rounds[1]);
  REQUIRE(miou.median_speedup.has_value());
  CHECK(*miou.median_speedup == 0.0);
}

TEST_CASE("compare writes per-cell CSVs and a report") {
  Workspace ws("fedrc_cmd_compare");
  auto cfg = small_config(ws.root);
  cfg.compare.seeds = {3, 4};
  std::ostringstream log;
  cmd_synth(cfg, log);
  std::ostringstream out;
  const auto report = cmd_compare(cfg, out, 1);
  for (const char* name : {"proportion_seed3.csv", "fedrc_seed4.csv", "compare.txt", "config.json"})
    CHECK(std::filesystem::exists(std::filesystem::path(cfg.output_dir) / name));
  CHECK(out.str().find("median rounds") != std::string::npos);
  CHECK(report.metrics.size() == 4);

  // Threaded execution fills the same slots with the same numbers.
  const auto data = std::make_shared<const FederatedDataset>(
      load_federated_dataset(cfg.data.train_path(), cfg.data.test_path(), 4));
  const auto threaded = compare_strategies(cfg, data, 4);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(metrics_csv(threaded.logs[s][k], report.strategies[s], 0) ==
            metrics_csv(report.logs[s][k], report.strategies[s], 0));
}
