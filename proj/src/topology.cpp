#include "fedrc/topology.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fedrc/errors.hpp"

namespace fedrc {

Topology::Topology(std::vector<EdgeNode> edges) : edges_(std::move(edges)) {
  if (edges_.empty()) throw ConfigError("topology has no edges");
  std::sort(edges_.begin(), edges_.end(), [](const EdgeNode& a, const EdgeNode& b) { return a.id < b.id; });
  std::set<VehicleId> seen;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    auto& e = edges_[i];
    if (i > 0 && edges_[i - 1].id == e.id) throw ConfigError("duplicate edge id " + std::to_string(e.id));
    if (e.vehicles.empty()) throw ConfigError("edge " + std::to_string(e.id) + " has no vehicles");
    std::sort(e.vehicles.begin(), e.vehicles.end());
    for (VehicleId v : e.vehicles)
      if (!seen.insert(v).second) throw ConfigError("vehicle " + std::to_string(v) + " assigned more than once");
  }
}

Topology Topology::uniform(std::size_t edges, std::size_t per_edge) {
  std::vector<EdgeNode> nodes;
  VehicleId next = 0;
  for (std::size_t e = 0; e < edges; ++e) {
    EdgeNode node{static_cast<EdgeId>(e), {}};
    for (std::size_t c = 0; c < per_edge; ++c) node.vehicles.push_back(next++);
    nodes.push_back(std::move(node));
  }
  return Topology(std::move(nodes));
}

std::size_t Topology::vehicle_count() const {
  std::size_t n = 0;
  for (const auto& e : edges_) n += e.vehicles.size();
  return n;
}

std::vector<VehicleId> Topology::vehicles() const {
  std::vector<VehicleId> out;
  for (const auto& e : edges_) out.insert(out.end(), e.vehicles.begin(), e.vehicles.end());
  return out;
}

}  // namespace fedrc
