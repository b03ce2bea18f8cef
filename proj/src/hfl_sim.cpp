#include "fedrc/hfl_sim.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "fedrc/errors.hpp"

namespace fedrc {

void RoundSchedule::validate() const {
  if (tau1 < 1) throw ConfigError("tau1 must be at least 1");
  if (tau2 < 1) throw ConfigError("tau2 must be at least 1");
  if (rounds < 1) throw ConfigError("rounds must be at least 1");
}

void TrainingConfig::validate() const {
  model.validate();
  if (model.input_dim != 5) throw ConfigError("pixel features are 5-dimensional; input_dim must be 5");
  if (batch_images < 1 || pixels_per_image < 1) throw ConfigError("batch sizes must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(adam.eps > 0.0)) throw ConfigError("Adam eps must be positive");
}

void FederatedDataset::validate(std::size_t classes) const {
  if (shards.size() != topology.vehicle_count()) throw DataError("one shard per vehicle required");
  auto check = [classes](const LabeledImage& s) {
    s.image.validate();
    if (s.mask.width != s.image.width || s.mask.height != s.image.height || s.mask.size() != s.image.pixel_count())
      throw DataError("mask and image dimensions differ");
    for (auto v : s.mask.labels)
      if (v >= classes) throw DataError("label out of range");
  };
  const auto ids = topology.vehicles();
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].empty()) throw DataError("vehicle " + std::to_string(ids[i]) + " has an empty shard");
    for (const auto& s : shards[i]) check(s);
  }
  if (test.empty()) throw DataError("test set is empty");
  for (const auto& s : test) check(s);
}

namespace {

LabeledImage load_pair(const std::filesystem::path& base, const ManifestRow& row, std::size_t classes) {
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  LabeledImage s{read_image_ppm(resolve(row.image_path)), read_mask_pgm(resolve(row.mask_path), classes)};
  if (s.mask.width != s.image.width || s.mask.height != s.image.height)
    throw DataError("mask " + row.mask_path + " does not match image " + row.image_path);
  return s;
}

}  // namespace

FederatedDataset load_federated_dataset(const std::filesystem::path& train_manifest,
                                        const std::filesystem::path& test_manifest, std::size_t classes) {
  const Manifest train = read_manifest(train_manifest);
  const Manifest test = read_manifest(test_manifest);
  FederatedDataset data;
  data.topology = topology_from_manifest(train);

  std::map<VehicleId, std::size_t> slot;
  const auto ids = data.topology.vehicles();
  for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;
  data.shards.resize(ids.size());

  const auto train_base = train_manifest.parent_path();
  for (const auto& row : train) {
    if (row.vehicle_id < 0) continue;
    data.shards[slot.at(static_cast<VehicleId>(row.vehicle_id))].push_back(load_pair(train_base, row, classes));
  }
  const auto test_base = test_manifest.parent_path();
  for (const auto& row : test) data.test.push_back(load_pair(test_base, row, classes));
  data.validate(classes);
  return data;
}

HierarchySummaries summarize(const FederatedDataset& data) {
  HierarchySummaries out;
  for (const auto& shard : data.shards) {
    std::vector<Summary> images;
    images.reserve(shard.size());
    for (const auto& s : shard) images.push_back(estimate_image_gaussian(s.image));
    out.vehicles.push_back(aggregate_vehicle<double>(images));
  }
  std::size_t next = 0;
  for (const auto& edge : data.topology.edges()) {
    const std::span<const Summary> members(out.vehicles.data() + next, edge.vehicles.size());
    out.edges.push_back(aggregate_children(members));
    next += edge.vehicles.size();
  }
  out.cloud = aggregate_children<double>(out.edges);
  return out;
}

HierarchyWeights resolve_hierarchy_weights(const Topology& topology, const HierarchySummaries& summaries,
                                           const StrategyChoice& strategy) {
  HierarchyWeights out;
  std::size_t next = 0;
  std::vector<ChildInfo> edge_children;
  for (std::size_t e = 0; e < topology.edges().size(); ++e) {
    std::vector<ChildInfo> children;
    for (std::size_t c = 0; c < topology.edges()[e].vehicles.size(); ++c, ++next)
      children.push_back({summaries.vehicles[next].n, summaries.vehicles[next]});
    out.edges.push_back(resolve_weights(strategy, children, summaries.edges[e]));
    edge_children.push_back({summaries.edges[e].n, summaries.edges[e]});
  }
  out.cloud = resolve_weights(strategy, edge_children, summaries.cloud);
  return out;
}

Batch draw_batch(const std::vector<LabeledImage>& shard, const TrainingConfig& cfg, Rng& rng) {
  if (shard.empty()) throw DataError("cannot draw a batch from an empty shard");
  const std::size_t rows = cfg.batch_images * cfg.pixels_per_image;
  Batch b{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), 5), Eigen::VectorXi(static_cast<Eigen::Index>(rows))};
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < cfg.batch_images; ++i) {
    const LabeledImage& s = shard[rng.below(shard.size())];
    for (std::size_t p = 0; p < cfg.pixels_per_image; ++p, ++row) {
      const std::size_t pixel = rng.below(s.image.pixel_count());
      const std::size_t x = pixel % s.image.width;
      const std::size_t y = pixel / s.image.width;
      pixel_features(s.image, x, y, b.features.row(row));
      b.labels[row] = s.mask.at(x, y);
    }
  }
  return b;
}

std::uint64_t vehicle_stream(std::uint64_t seed, VehicleId vehicle, std::size_t round) {
  return stream_key(seed, 0x7EC, vehicle, round);
}

ModelParams train_centralized(const std::vector<LabeledImage>& shard, const TrainingConfig& cfg, std::uint64_t seed,
                              std::size_t iterations, VehicleId stream_vehicle) {
  cfg.validate();
  ModelParams params = init_params(cfg.model, seed);
  AdamState opt = AdamState::fresh(cfg.adam, cfg.model.param_count());
  Rng rng(vehicle_stream(seed, stream_vehicle, 0));
  for (std::size_t i = 0; i < iterations; ++i) {
    const Batch batch = draw_batch(shard, cfg, rng);
    const LossAndGrad lg = forward_loss(params, cfg.model, batch);
    if (!std::isfinite(lg.loss)) throw DivergenceError("divergence detected at iteration " + std::to_string(i));
    auto next = adam_step(params, lg.grads, std::move(opt));
    params = std::move(next.params);
    opt = std::move(next.state);
  }
  return params;
}

Experiment Experiment::initialize(std::shared_ptr<const FederatedDataset> data, const RoundSchedule& schedule,
                                  const StrategyChoice& strategy, const TrainingConfig& training, std::uint64_t seed) {
  if (!data) throw std::invalid_argument("no dataset");
  schedule.validate();
  training.validate();
  data->validate(training.model.classes);

  Experiment ex;
  ex.data_ = std::move(data);
  ex.schedule_ = schedule;
  ex.strategy_ = strategy;
  ex.training_ = training;
  ex.seed_ = seed;

  const Topology& topo = ex.data_->topology;
  ex.summaries_ = summarize(*ex.data_);
  ex.weights_ = resolve_hierarchy_weights(topo, ex.summaries_, strategy);

  ex.global_ = init_params(training.model, seed);
  std::size_t next = 0;
  for (const auto& edge : topo.edges()) {
    ex.members_.emplace_back(next, next + edge.vehicles.size());
    next += edge.vehicles.size();
    ex.edge_models_.push_back(ex.global_);
    for (VehicleId v : edge.vehicles) {
      VehicleState vs;
      vs.id = v;
      vs.model = ex.global_;
      ex.vehicles_.push_back(std::move(vs));
    }
  }
  ex.start_round();
  return ex;
}

void Experiment::start_round() {
  for (auto& v : vehicles_) {
    v.optimizer = AdamState::fresh(training_.adam, training_.model.param_count());
    v.rng = Rng(vehicle_stream(seed_, v.id, round_));
  }
  round_loss_ = {};
  round_loss_count_ = 0;
}

void Experiment::run_local_iterations(std::size_t vehicle, std::size_t count) {
  VehicleState& v = vehicles_.at(vehicle);
  const auto& shard = data_->shards[vehicle];
  for (std::size_t i = 0; i < count; ++i) {
    try {
      const Batch batch = draw_batch(shard, training_, v.rng);
      const LossAndGrad lg = forward_loss(v.model, training_.model, batch);
      if (!std::isfinite(lg.loss)) throw DivergenceError("divergence detected: non-finite loss");
      auto next = adam_step(v.model, lg.grads, std::move(v.optimizer));
      v.model = std::move(next.params);
      v.optimizer = std::move(next.state);
      round_loss_.add(lg.loss);
      ++round_loss_count_;
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " on vehicle " + std::to_string(v.id) + " in round " +
                            std::to_string(round_ + 1));
    }
    ++v.iterations;
  }
}

void Experiment::edge_aggregate(std::size_t edge) {
  const auto [first, last] = members_.at(edge);
  std::vector<ModelParams> models;
  models.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) models.push_back(vehicles_[i].model);
  edge_models_[edge] = weighted_average(models, weights_.edges[edge]);
  for (std::size_t i = first; i < last; ++i) vehicles_[i].model = edge_models_[edge];
  events_.push_back({AggregationEvent::Kind::Edge, data_->topology.edges()[edge].id, vehicles_[first].iterations});
}

void Experiment::cloud_aggregate() {
  global_ = weighted_average(edge_models_, weights_.cloud);
  for (auto& m : edge_models_) m = global_;
  for (auto& v : vehicles_) v.model = global_;
  events_.push_back({AggregationEvent::Kind::Cloud, 0, vehicles_.front().iterations});
  ++round_;
  start_round();
}

SegmentationScores Experiment::evaluate() const {
  ConfusionAccumulator acc(training_.model.classes);
  for (const auto& s : data_->test) acc.accumulate(predict(global_, training_.model, s.image), s.mask);
  return acc.finalize();
}

std::vector<RoundRecord> Experiment::run() {
  std::vector<RoundRecord> log;
  log.reserve(schedule_.rounds);
  while (round_ < schedule_.rounds) {
    for (std::size_t k = 0; k < schedule_.tau2; ++k) {
      for (std::size_t v = 0; v < vehicles_.size(); ++v) run_local_iterations(v, schedule_.tau1);
      for (std::size_t e = 0; e < edge_models_.size(); ++e) edge_aggregate(e);
    }
    const double loss = round_loss_count_ ? round_loss_.value() / static_cast<double>(round_loss_count_) : 0.0;
    cloud_aggregate();
    log.push_back({round_, evaluate(), loss});
  }
  return log;
}

}  // namespace fedrc
