#pragma once

// Small in-memory federated datasets for the simulator tests.

#include <cstdint>
#include <memory>
#include <vector>

#include "fedrc/data_io.hpp"
#include "fedrc/hfl_sim.hpp"

namespace fedrc::fixture {

/// `per_vehicle` images per vehicle; vehicles on edge e use street(shifts[e]).
inline std::shared_ptr<FederatedDataset> dataset(const Topology& topo, std::size_t per_vehicle,
                                                 const std::vector<double>& shifts, std::uint64_t seed = 5,
                                                 std::size_t side = 12) {
  auto data = std::make_shared<FederatedDataset>();
  data->topology = topo;
  std::uint64_t s = seed;
  for (std::size_t e = 0; e < topo.edges().size(); ++e) {
    const CityProfile city = CityProfile::street(shifts.at(e));
    for (std::size_t v = 0; v < topo.edges()[e].vehicles.size(); ++v)
      data->shards.push_back(synthesize_city(city, per_vehicle, side, side, ++s));
  }
  data->test = synthesize_city(CityProfile::street(0), 4, side, side, seed + 1000);
  return data;
}

/// Every vehicle gets a copy of the same shard.
inline std::shared_ptr<FederatedDataset> identical_shards(const Topology& topo, std::size_t per_vehicle,
                                                          std::uint64_t seed = 5) {
  auto data = std::make_shared<FederatedDataset>();
  data->topology = topo;
  const auto shard = synthesize_city(CityProfile::street(0), per_vehicle, 12, 12, seed);
  data->shards.assign(topo.vehicle_count(), shard);
  data->test = synthesize_city(CityProfile::street(0), 4, 12, 12, seed + 1000);
  return data;
}

inline TrainingConfig small_training() {
  TrainingConfig t;
  t.batch_images = 2;
  t.pixels_per_image = 16;
  return t;
}

}  // namespace fedrc::fixture
