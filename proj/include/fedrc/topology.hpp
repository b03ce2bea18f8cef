#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedrc {

using VehicleId = std::uint32_t;
using EdgeId = std::uint32_t;

struct EdgeNode {
  EdgeId id = 0;
  std::vector<VehicleId> vehicles;  ///< ascending

  friend bool operator==(const EdgeNode&, const EdgeNode&) = default;
};

/// Cloud -> edges -> vehicles tree. Edges and their vehicles are kept in
/// ascending ID order, which is also the aggregation summation order.
class Topology {
 public:
  Topology() = default;
  explicit Topology(std::vector<EdgeNode> edges);

  /// `edges` edges with `per_edge` vehicles each, numbered consecutively.
  static Topology uniform(std::size_t edges, std::size_t per_edge);

  const std::vector<EdgeNode>& edges() const { return edges_; }
  std::size_t vehicle_count() const;
  /// Vehicles in edge-major order.
  std::vector<VehicleId> vehicles() const;

  friend bool operator==(const Topology&, const Topology&) = default;

 private:
  std::vector<EdgeNode> edges_;
};

}  // namespace fedrc
