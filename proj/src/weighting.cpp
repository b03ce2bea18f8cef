#include "fedrc/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedrc/errors.hpp"

namespace fedrc {

WeightVector::WeightVector(Eigen::VectorXd values) : values_(std::move(values)) {}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Proportion:
      return "proportion";
    case StrategyKind::FedRC:
      return "fedrc";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "proportion") return StrategyKind::Proportion;
  if (name == "fedrc") return StrategyKind::FedRC;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected fedrc or proportion)");
}

WeightVector proportion_weights(std::span<const std::uint64_t> sizes) {
  if (sizes.empty()) throw std::invalid_argument("proportion weights need at least one child");
  std::uint64_t total = 0;
  for (auto s : sizes) {
    if (s == 0) throw std::invalid_argument("child dataset size must be at least 1");
    total += s;
  }
  Eigen::VectorXd w(static_cast<Eigen::Index>(sizes.size()));
  for (std::size_t i = 0; i < sizes.size(); ++i)
    w[static_cast<Eigen::Index>(i)] = static_cast<double>(sizes[i]) / static_cast<double>(total);
  return WeightVector(std::move(w));
}

double floored_distance(const Summary& child, const Summary& parent) {
  Summary a = child;
  Summary b = parent;
  a.var = std::max(a.var, kVarianceFloor);
  b.var = std::max(b.var, kVarianceFloor);
  return bhattacharyya(a, b);
}

WeightVector fedrc_weights(std::span<const Summary> children, const Summary& parent, double epsilon) {
  if (children.empty()) throw std::invalid_argument("FedRC weights need at least one child");
  if (!(epsilon > 0.0)) throw std::invalid_argument("distance floor epsilon must be positive");

  Eigen::VectorXd inverse(static_cast<Eigen::Index>(children.size()));
  for (std::size_t i = 0; i < children.size(); ++i) {
    const double d = std::max(floored_distance(children[i], parent), epsilon);
    inverse[static_cast<Eigen::Index>(i)] = 1.0 / d;
  }
  // Summed in child order; Eigen's sum() may reassociate.
  KahanSum<double> total;
  for (Eigen::Index i = 0; i < inverse.size(); ++i) total.add(inverse[i]);
  return WeightVector(inverse / total.value());
}

WeightVector resolve_weights(const StrategyChoice& strategy, std::span<const ChildInfo> children,
                             const Summary& parent) {
  if (children.empty()) throw std::invalid_argument("cannot weight an empty child set");
  switch (strategy.kind) {
    case StrategyKind::Proportion: {
      std::vector<std::uint64_t> sizes;
      sizes.reserve(children.size());
      for (const auto& c : children) sizes.push_back(c.size);
      return proportion_weights(sizes);
    }
    case StrategyKind::FedRC: {
      std::vector<Summary> summaries;
      summaries.reserve(children.size());
      for (const auto& c : children) summaries.push_back(c.summary);
      return fedrc_weights(summaries, parent, strategy.epsilon);
    }
  }
  throw std::logic_error("unhandled strategy");
}

}  // namespace fedrc
