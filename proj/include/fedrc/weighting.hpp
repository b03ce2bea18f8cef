#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fedrc/gauss_stats.hpp"

namespace fedrc {

/// Aggregation weights over a server's children, indexed by child position.
/// Entries lie in [0, 1] and sum to one.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

 private:
  Eigen::VectorXd values_;
};

enum class StrategyKind { Proportion, FedRC };

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

/// Variance floor applied to summaries before a distance is taken.
inline constexpr double kVarianceFloor = 1e-6;

struct StrategyChoice {
  StrategyKind kind = StrategyKind::FedRC;
  double epsilon = 1e-6;  ///< distance floor in nats
};

/// weight_i = size_i / sum(sizes).
WeightVector proportion_weights(std::span<const std::uint64_t> sizes);

/// Inverse Bhattacharyya distance to the parent, normalized. Distances are
/// floored at `epsilon`; child sizes do not enter the weight.
WeightVector fedrc_weights(std::span<const Summary> children, const Summary& parent, double epsilon);

/// Floors the variance at kVarianceFloor and returns the distance to `parent`.
double floored_distance(const Summary& child, const Summary& parent);

struct ChildInfo {
  std::uint64_t size = 0;
  Summary summary;
};

WeightVector resolve_weights(const StrategyChoice& strategy, std::span<const ChildInfo> children,
                             const Summary& parent);

}  // namespace fedrc
