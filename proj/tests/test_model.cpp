#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fedrc/model.hpp"
#include "oracles.hpp"

using namespace fedrc;

TEST_CASE("parameter layout") {
  const ModelConfig cfg;
  CHECK(cfg.param_count() == 5 * 16 + 16 + 16 * 4 + 4);
  ModelParams p = ModelParams::LinSpaced(static_cast<Eigen::Index>(cfg.param_count()), 0, cfg.param_count() - 1);
  const MlpView v(p, cfg);
  CHECK(v.w1(0, 0) == 0.0);
  CHECK(v.w1(1, 0) == 1.0);  // column-major: input index fastest
  CHECK(v.b1[0] == 80.0);
  CHECK(v.w2(0, 0) == 96.0);
  CHECK(v.b2[3] == static_cast<double>(cfg.param_count() - 1));
  CHECK_THROWS(MlpView(ModelParams::Zero(3), cfg));
}

TEST_CASE("forward_loss: zero parameters give ln C") {
  Rng rng(1);
  for (std::size_t classes : {2u, 4u, 7u}) {
    const ModelConfig cfg{5, 8, classes};
    const Batch b = oracle::random_batch(rng, cfg, 33);
    const auto lg = forward_loss(ModelParams::Zero(cfg.param_count()), cfg, b);
    CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-15));
  }
}

TEST_CASE("forward_loss: analytic gradient matches finite differences") {
  Rng rng(2);
  const ModelConfig cfg{5, 16, 4};
  for (int draw = 0; draw < 20; ++draw) {
    const ModelParams p = oracle::random_params(rng, cfg);
    const Batch b = oracle::random_batch(rng, cfg, 12);
    const auto lg = forward_loss(p, cfg, b);
    const auto fd = oracle::finite_difference_grad(p, cfg, b);
    CHECK(oracle::max_relative_error(lg.grads, fd, 1e-4) <= 1e-5);
  }
}

TEST_CASE("forward_loss: duplicating the batch changes nothing") {
  Rng rng(3);
  const ModelConfig cfg{5, 16, 4};
  const ModelParams p = oracle::random_params(rng, cfg);
  const Batch b = oracle::random_batch(rng, cfg, 20);
  Batch twice{Eigen::MatrixXd(40, 5), Eigen::VectorXi(40)};
  twice.features << b.features, b.features;
  twice.labels << b.labels, b.labels;
  const auto one = forward_loss(p, cfg, b);
  const auto two = forward_loss(p, cfg, twice);
  CHECK(std::abs(one.loss - two.loss) <= 1e-12);
  CHECK((one.grads - two.grads).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("forward_loss: shape errors") {
  const ModelConfig cfg;
  Rng rng(4);
  const Batch b = oracle::random_batch(rng, cfg, 4);
  CHECK_THROWS(forward_loss(ModelParams::Zero(10), cfg, b));
  CHECK_THROWS(forward_loss(ModelParams::Zero(cfg.param_count()), cfg, Batch{Eigen::MatrixXd(0, 5), Eigen::VectorXi(0)}));
  Batch bad = b;
  bad.labels[0] = 9;
  CHECK_THROWS(forward_loss(ModelParams::Zero(cfg.param_count()), cfg, bad));
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradients without decay leave parameters unchanged") {
    AdamConfig c;
    c.weight_decay = 0;
    const ModelParams p = ModelParams::LinSpaced(6, -1, 1);
    const auto r = adam_step(p, ModelParams::Zero(6), AdamState::fresh(c, 6));
    CHECK(r.params == p);
    CHECK(r.state.step == 1);
  }
  SUBCASE("decay alone shrinks magnitudes") {
    const ModelParams p = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
    const auto r = adam_step(p, ModelParams::Zero(3), AdamState::fresh(AdamConfig{}, 3));
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(r.params[i]) < std::abs(p[i]));
  }
  SUBCASE("minimizes w^2 monotonically") {
    AdamConfig c;
    c.lr = 3e-3;  // the default 3e-4 only travels ~0.06 in 200 steps
    c.weight_decay = 0;
    ModelParams w = ModelParams::Constant(1, 1.0);
    AdamState s = AdamState::fresh(c, 1);
    double f = 1.0;
    for (int i = 0; i < 200; ++i) {
      auto r = adam_step(w, 2.0 * w, std::move(s));
      w = r.params;
      s = std::move(r.state);
      const double next = w[0] * w[0];
      REQUIRE(next < f);
      f = next;
    }
    CHECK(f < 0.5);
  }
  SUBCASE("non-finite gradients are divergence") {
    ModelParams g = ModelParams::Zero(2);
    g[1] = std::nan("");
    CHECK_THROWS_WITH_AS(adam_step(ModelParams::Zero(2), g, AdamState::fresh(AdamConfig{}, 2)), "divergence detected",
                         DivergenceError);
  }
  CHECK_THROWS(adam_step(ModelParams::Zero(2), ModelParams::Zero(3), AdamState::fresh(AdamConfig{}, 2)));
}

TEST_CASE("weighted_average") {
  const ModelParams a = ModelParams::Constant(5, 1.0);
  const ModelParams b = ModelParams::Constant(5, 3.0);
  SUBCASE("unit weight copies") {
    Rng rng(5);
    const ModelParams m = oracle::random_params(rng, ModelConfig{});
    const std::vector<ModelParams> one{m};
    CHECK(weighted_average(one, WeightVector(Eigen::VectorXd::Ones(1))) == m);
  }
  SUBCASE("midpoint") {
    const std::vector<ModelParams> two{a, b};
    const auto avg = weighted_average(two, WeightVector(Eigen::VectorXd::Constant(2, 0.5)));
    CHECK(avg == ModelParams::Constant(5, 2.0));
  }
  SUBCASE("matches a brute-force convex combination") {
    Rng rng(6);
    const ModelConfig cfg;
    const std::vector<ModelParams> ms{oracle::random_params(rng, cfg), oracle::random_params(rng, cfg)};
    const auto w = proportion_weights(std::vector<std::uint64_t>{578, 503});
    const auto avg = weighted_average(ms, w);
    for (Eigen::Index i = 0; i < avg.size(); ++i)
      CHECK(std::abs(avg[i] - (578.0 / 1081.0 * ms[0][i] + 503.0 / 1081.0 * ms[1][i])) <= 1e-12);
  }
  SUBCASE("idempotent on copies and convex") {
    Rng rng(7);
    const ModelConfig cfg;
    for (int t = 0; t < 50; ++t) {
      const std::size_t k = 1 + rng.below(7);
      Eigen::VectorXd raw(static_cast<Eigen::Index>(k));
      for (Eigen::Index i = 0; i < raw.size(); ++i) raw[i] = rng.uniform(0.01, 1);
      const WeightVector w(raw / raw.sum());
      const ModelParams m = oracle::random_params(rng, cfg);
      CHECK(weighted_average(std::vector<ModelParams>(k, m), w) == m);

      std::vector<ModelParams> ms;
      for (std::size_t i = 0; i < k; ++i) ms.push_back(oracle::random_params(rng, cfg));
      const auto avg = weighted_average(ms, w);
      for (Eigen::Index c = 0; c < avg.size(); ++c) {
        double lo = ms[0][c], hi = ms[0][c];
        for (const auto& x : ms) {
          lo = std::min(lo, x[c]);
          hi = std::max(hi, x[c]);
        }
        CHECK(avg[c] >= lo);
        CHECK(avg[c] <= hi);
      }
    }
  }
  CHECK_THROWS(weighted_average(std::vector<ModelParams>{a, ModelParams::Zero(4)}, WeightVector(Eigen::VectorXd::Constant(2, 0.5))));
  CHECK_THROWS(weighted_average(std::vector<ModelParams>{a}, WeightVector(Eigen::VectorXd::Constant(2, 0.5))));
}

TEST_CASE("local training separates a linearly separable pixel task") {
  // Class is decided by the red channel: below 0.5 -> 0, above -> 1.
  const ModelConfig cfg{5, 16, 2};
  Rng rng(12);
  ModelParams p = init_params(cfg, 3);
  AdamState s = AdamState::fresh(AdamConfig{}, cfg.param_count());
  auto sample = [&](std::size_t rows) {
    Batch b{Eigen::MatrixXd(rows, 5), Eigen::VectorXi(rows)};
    for (std::size_t i = 0; i < rows; ++i) {
      for (int j = 0; j < 5; ++j) b.features(i, j) = rng.uniform();
      b.features(i, 0) = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.4) : rng.uniform(0.6, 1.0);
      b.labels[i] = b.features(i, 0) > 0.5 ? 1 : 0;
    }
    return b;
  };
  for (int step = 0; step < 500; ++step) {
    auto r = adam_step(p, forward_loss(p, cfg, sample(512)).grads, std::move(s));
    p = std::move(r.params);
    s = std::move(r.state);
  }
  const Batch eval = sample(2000);
  const Eigen::MatrixXd scores = logits(p, cfg, eval.features);
  int correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    correct += best == eval.labels[i];
  }
  CHECK(correct / 2000.0 > 0.95);
}

TEST_CASE("init_params is seeded and bounded") {
  const ModelConfig cfg;
  const auto a = init_params(cfg, 42);
  CHECK(a == init_params(cfg, 42));
  CHECK(a != init_params(cfg, 43));
  CHECK(a.cwiseAbs().maxCoeff() <= 0.1);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "fedrc_ckpt_test";
  std::filesystem::create_directories(dir);
  const ModelConfig cfg{5, 7, 3};
  Rng rng(13);
  const ModelParams p = oracle::random_params(rng, cfg);
  save_checkpoint(dir / "m.frcm", p, cfg);
  CHECK(std::filesystem::file_size(dir / "m.frcm") == 16 + 8 * cfg.param_count());
  const auto ck = load_checkpoint(dir / "m.frcm");
  CHECK(ck.config == cfg);
  CHECK(ck.params == p);
  {
    std::ofstream os(dir / "bad.frcm", std::ios::binary);
    os << "NOPE and more bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.frcm"), DataError);
  std::filesystem::remove_all(dir);
}
