#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fedrc/weighting.hpp"
#include "fedrc/rng.hpp"

using namespace fedrc;

namespace {

void check_simplex(const WeightVector& w) {
  double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] >= 0.0);
    CHECK(w[i] <= 1.0);
    total += w[i];
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

// Child whose floored distance to N(0, 1) is exactly 0.25 * dmu^2 / 2.
Summary shifted(double dmu) { return {1, dmu, 1.0}; }

}  // namespace

TEST_CASE("proportion weights") {
  const std::vector<std::uint64_t> fig4{578, 503};
  const auto w = proportion_weights(fig4);
  CHECK(w[0] == doctest::Approx(578.0 / 1081.0));
  CHECK(std::round(w[0] * 100) / 100 == doctest::Approx(0.53));
  CHECK(std::round(w[1] * 100) / 100 == doctest::Approx(0.47));

  CHECK(proportion_weights(std::vector<std::uint64_t>{17})[0] == 1.0);
  const auto eq = proportion_weights(std::vector<std::uint64_t>{10, 10, 10});
  for (std::size_t i = 0; i < 3; ++i) CHECK(eq[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS(proportion_weights(std::vector<std::uint64_t>{}));
  CHECK_THROWS(proportion_weights(std::vector<std::uint64_t>{3, 0}));
}

TEST_CASE("proportion weights are scale invariant") {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint64_t> sizes(1 + rng.below(8));
    for (auto& s : sizes) s = 1 + rng.below(2000);
    const auto base = proportion_weights(sizes);
    const std::uint64_t k = 1 + rng.below(50);
    for (auto& s : sizes) s *= k;
    const auto scaled = proportion_weights(sizes);
    for (std::size_t i = 0; i < sizes.size(); ++i) CHECK(std::abs(base[i] - scaled[i]) <= 1e-12);
  }
}

TEST_CASE("fedrc weights") {
  const Summary parent{1, 0, 1};
  SUBCASE("inverse distances 0.5 and 1.0") {
    // dmu = 2 -> 0.5 nats; dmu = sqrt(8) -> 1.0 nats.
    const std::vector<Summary> kids{shifted(2.0), shifted(std::sqrt(8.0))};
    const auto w = fedrc_weights(kids, parent, 1e-6);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("children identical to the parent floor to uniform") {
    const std::vector<Summary> kids(4, parent);
    const auto w = fedrc_weights(kids, parent, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] == 0.25);
  }
  SUBCASE("single child") {
    const std::vector<Summary> kids{shifted(3)};
    CHECK(fedrc_weights(kids, parent, 1e-6)[0] == 1.0);
  }
  SUBCASE("sizes do not enter") {
    const std::vector<Summary> a{{5, 1, 1}, {900, 2, 1}};
    const std::vector<Summary> b{{1, 1, 1}, {1, 2, 1}};
    CHECK(fedrc_weights(a, parent, 1e-6).values() == fedrc_weights(b, parent, 1e-6).values());
  }
  SUBCASE("zero-variance summaries are floored, not rejected") {
    const std::vector<Summary> kids{{1, 0.5, 0.0}, {1, 1.5, 0.0}};
    const auto w = fedrc_weights(kids, Summary{2, 1.0, 0.0}, 1e-6);
    CHECK(w[0] == doctest::Approx(0.5));
    check_simplex(w);
  }
  CHECK_THROWS(fedrc_weights(std::vector<Summary>{}, parent, 1e-6));
  CHECK_THROWS(fedrc_weights(std::vector<Summary>{parent}, parent, 0.0));
}

TEST_CASE("fedrc weights are monotone in distance") {
  const Summary parent{1, 0, 1};
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<Summary> kids;
    const std::size_t n = 2 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) kids.push_back(shifted(rng.uniform(0.1, 5)));
    const auto before = fedrc_weights(kids, parent, 1e-6);
    kids[0].mu += rng.uniform(0.01, 2);
    const auto after = fedrc_weights(kids, parent, 1e-6);
    CHECK(after[0] < before[0]);
  }
}

TEST_CASE("weights are permutation equivariant") {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<ChildInfo> kids;
    for (std::size_t i = 0; i < n; ++i)
      kids.push_back({1 + rng.below(100), {1, rng.uniform(-5, 5), rng.uniform(0.1, 4)}});
    const Summary parent{1, 0, 1};
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<ChildInfo> permuted;
    for (auto p : perm) permuted.push_back(kids[p]);
    for (auto kind : {StrategyKind::Proportion, StrategyKind::FedRC}) {
      const auto w = resolve_weights({kind, 1e-6}, kids, parent);
      const auto wp = resolve_weights({kind, 1e-6}, permuted, parent);
      for (std::size_t i = 0; i < n; ++i) CHECK(wp[i] == doctest::Approx(w[perm[i]]).epsilon(1e-14));
    }
  }
}

TEST_CASE("resolve_weights dispatch") {
  const Summary s{2, 0, 1};
  SUBCASE("proportion uses sizes") {
    const std::vector<ChildInfo> kids{{578, s}, {503, s}};
    const auto w = resolve_weights({StrategyKind::Proportion, 1e-6}, kids, s);
    CHECK(w[0] == doctest::Approx(0.5347).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(0.4653).epsilon(1e-4));
  }
  SUBCASE("fedrc, identical children") {
    const std::vector<ChildInfo> kids{{1, s}, {9, s}, {4, s}};
    const auto w = resolve_weights({StrategyKind::FedRC, 1e-6}, kids, aggregate_children<double>(std::vector<Summary>{s, s, s}));
    CHECK(w[0] == doctest::Approx(w[1]).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(w[2]).epsilon(1e-15));
  }
  SUBCASE("fedrc, two separated children") {
    const Summary a{2, 0, 1}, b{2, 10, 1};
    const auto parent = aggregate_children<double>(std::vector<Summary>{a, b});
    // Parent (4, 5, 0.5): both children sit 5 away with variance 1.
    CHECK(parent.mu == 5.0);
    CHECK(parent.var == 0.5);
    const double d = 0.25 * 25 / 1.5 + 0.5 * std::log(1.5 / (2 * std::sqrt(0.5)));
    CHECK(floored_distance(a, parent) == doctest::Approx(d).epsilon(1e-14));
    const std::vector<ChildInfo> kids{{2, a}, {2, b}};
    const auto w = resolve_weights({StrategyKind::FedRC, 1e-6}, kids, parent);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-14));

    // Pull the parent toward child a: a must now win.
    const std::vector<ChildInfo> skew{{6, a}, {2, b}};
    const auto parent2 = aggregate_children<double>(std::vector<Summary>{{6, 0, 1}, b});
    const auto w2 = resolve_weights({StrategyKind::FedRC, 1e-6}, skew, parent2);
    CHECK(w2[0] > w2[1]);
  }
  CHECK_THROWS(resolve_weights({StrategyKind::FedRC, 1e-6}, std::vector<ChildInfo>{}, s));
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("fedrc") == StrategyKind::FedRC);
  CHECK(parse_strategy("proportion") == StrategyKind::Proportion);
  CHECK(to_string(StrategyKind::FedRC) == "fedrc");
  CHECK_THROWS_AS(parse_strategy("fedavg"), ConfigError);
}
