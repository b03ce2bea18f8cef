#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrc/data_io.hpp"
#include "fedrc/hfl_sim.hpp"
#include "fedrc/weighting.hpp"

namespace fedrc {

struct DataPaths {
  std::string dir = "data";
  std::string train_manifest = "manifest.csv";  ///< relative to dir
  std::string test_manifest = "test_manifest.csv";

  std::filesystem::path train_path() const { return std::filesystem::path(dir) / train_manifest; }
  std::filesystem::path test_path() const { return std::filesystem::path(dir) / test_manifest; }

  friend bool operator==(const DataPaths&, const DataPaths&) = default;
};

struct SynthConfig {
  std::uint64_t seed = 2024;
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t train_per_city = 60;
  std::size_t test_per_city = 20;
  std::size_t vehicles_per_city = 2;
  SplitScheme::Kind split = SplitScheme::Kind::Equal;
  std::vector<std::vector<std::size_t>> sizes;  ///< per city, per vehicle (skewed only)
  std::vector<CityProfile> cities = {CityProfile::street(0.0), CityProfile::street(0.0), CityProfile::street(60.0)};

  void validate() const;
};

struct CompareConfig {
  double threshold = 0.95;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<StrategyKind> strategies = {StrategyKind::Proportion, StrategyKind::FedRC};

  void validate() const;
};

/// Everything a CLI subcommand needs. Unset keys take the defaults below;
/// unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DataPaths data;
  SynthConfig synth;
  RoundSchedule schedule;
  StrategyChoice strategy;
  TrainingConfig training;
  CompareConfig compare;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Writes the effective configuration with every default materialized.
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

}  // namespace fedrc
