#pragma once

// Two-stage hierarchical federated training: vehicles run tau1 local Adam
// steps between edge aggregations, edges aggregate tau2 times between cloud
// aggregations, and the cloud model is redistributed to every node. Edge and
// cloud weights come from the dataset summaries and are fixed for the run.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "fedrc/data_io.hpp"
#include "fedrc/gauss_stats.hpp"
#include "fedrc/metrics.hpp"
#include "fedrc/model.hpp"
#include "fedrc/rng.hpp"
#include "fedrc/topology.hpp"
#include "fedrc/weighting.hpp"

namespace fedrc {

struct RoundSchedule {
  std::size_t tau1 = 4;    ///< local iterations per edge aggregation
  std::size_t tau2 = 2;    ///< edge aggregations per cloud aggregation
  std::size_t rounds = 40; ///< cloud aggregations

  void validate() const;
  std::size_t edge_aggregations() const { return rounds * tau2; }
  std::size_t local_iterations() const { return rounds * tau2 * tau1; }
};

struct TrainingConfig {
  ModelConfig model;
  AdamConfig adam;
  std::size_t batch_images = 8;
  std::size_t pixels_per_image = 64;

  void validate() const;
};

/// Training shards per vehicle plus the held-out test set.
struct FederatedDataset {
  Topology topology;
  std::vector<std::vector<LabeledImage>> shards;  ///< edge-major vehicle order
  std::vector<LabeledImage> test;

  void validate(std::size_t classes) const;
};

/// Loads shards and the test set; manifest paths resolve against the
/// directory of their manifest.
FederatedDataset load_federated_dataset(const std::filesystem::path& train_manifest,
                                        const std::filesystem::path& test_manifest, std::size_t classes);

/// Gaussian summaries at each tier.
struct HierarchySummaries {
  std::vector<Summary> vehicles;  ///< edge-major vehicle order
  std::vector<Summary> edges;
  Summary cloud;
};

HierarchySummaries summarize(const FederatedDataset& data);

struct HierarchyWeights {
  std::vector<WeightVector> edges;  ///< weights over each edge's vehicles
  WeightVector cloud;               ///< weights over edges
};

HierarchyWeights resolve_hierarchy_weights(const Topology& topology, const HierarchySummaries& summaries,
                                           const StrategyChoice& strategy);

/// `batch_images` images drawn with replacement, `pixels_per_image` pixels
/// drawn uniformly from each.
Batch draw_batch(const std::vector<LabeledImage>& shard, const TrainingConfig& cfg, Rng& rng);

/// RNG stream for a vehicle within one cloud round.
std::uint64_t vehicle_stream(std::uint64_t seed, VehicleId vehicle, std::size_t round);

/// Plain single-node training loop from the seeded initial model, drawing
/// batches from the stream of (`seed`, `stream_vehicle`, round 0).
ModelParams train_centralized(const std::vector<LabeledImage>& shard, const TrainingConfig& cfg, std::uint64_t seed,
                              std::size_t iterations, VehicleId stream_vehicle = 0);

struct AggregationEvent {
  enum class Kind { Edge, Cloud };
  Kind kind = Kind::Edge;
  EdgeId edge = 0;                    ///< unused for cloud events
  std::size_t local_iteration = 0;    ///< per-vehicle iteration count u at the trigger
};

struct RoundRecord {
  std::size_t round = 0;  ///< 1-based cloud round
  SegmentationScores scores;
  double train_loss = 0.0;
};

class Experiment {
 public:
  /// Summarizes every tier, freezes the aggregation weights and broadcasts
  /// one seeded initial model.
  static Experiment initialize(std::shared_ptr<const FederatedDataset> data, const RoundSchedule& schedule,
                               const StrategyChoice& strategy, const TrainingConfig& training, std::uint64_t seed);

  /// `count` draw -> loss -> Adam cycles on vehicle `vehicle` (edge-major index).
  void run_local_iterations(std::size_t vehicle, std::size_t count);
  void edge_aggregate(std::size_t edge);
  /// Aggregates edges, broadcasts the global model and starts the next cloud
  /// round with fresh optimizer moments and RNG streams.
  void cloud_aggregate();

  SegmentationScores evaluate() const;

  /// R cloud rounds, each evaluated once.
  std::vector<RoundRecord> run();

  const ModelParams& global_model() const { return global_; }
  const ModelParams& edge_model(std::size_t edge) const { return edge_models_.at(edge); }
  const ModelParams& vehicle_model(std::size_t vehicle) const { return vehicles_.at(vehicle).model; }
  std::size_t vehicle_count() const { return vehicles_.size(); }
  std::size_t edge_count() const { return edge_models_.size(); }
  const HierarchySummaries& summaries() const { return summaries_; }
  const HierarchyWeights& weights() const { return weights_; }
  const std::vector<AggregationEvent>& events() const { return events_; }
  std::size_t completed_rounds() const { return round_; }
  const RoundSchedule& schedule() const { return schedule_; }
  const TrainingConfig& training() const { return training_; }
  const StrategyChoice& strategy() const { return strategy_; }
  std::uint64_t seed() const { return seed_; }
  /// Edge-major index range [first, last) of an edge's vehicles.
  std::pair<std::size_t, std::size_t> edge_members(std::size_t edge) const { return members_.at(edge); }

 private:
  struct VehicleState {
    VehicleId id = 0;
    ModelParams model;
    AdamState optimizer;
    Rng rng{0};
    std::size_t iterations = 0;
  };

  Experiment() = default;
  void start_round();

  std::shared_ptr<const FederatedDataset> data_;
  RoundSchedule schedule_;
  StrategyChoice strategy_;
  TrainingConfig training_;
  std::uint64_t seed_ = 0;

  HierarchySummaries summaries_;
  HierarchyWeights weights_;
  std::vector<std::pair<std::size_t, std::size_t>> members_;

  ModelParams global_;
  std::vector<ModelParams> edge_models_;
  std::vector<VehicleState> vehicles_;
  std::size_t round_ = 0;
  std::vector<AggregationEvent> events_;
  KahanSum<double> round_loss_;
  std::size_t round_loss_count_ = 0;
};

}  // namespace fedrc
