#include "fedrc/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "fedrc/errors.hpp"
#include "fedrc/rng.hpp"

namespace fedrc {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

void check_shape(const ModelParams& params, const ModelConfig& cfg) {
  if (static_cast<std::size_t>(params.size()) != cfg.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                " does not match model layout (" + std::to_string(cfg.param_count()) + ")");
}

}  // namespace

void ModelConfig::validate() const {
  if (input_dim == 0 || hidden == 0) throw ConfigError("model dimensions must be positive");
  if (classes < 2) throw ConfigError("model needs at least 2 classes");
  if (classes > 255) throw ConfigError("at most 255 classes fit in an 8-bit mask");
}

MlpView::MlpView(const ModelParams& params, const ModelConfig& cfg)
    : w1(params.data(), idx(cfg.input_dim), idx(cfg.hidden)),
      b1(params.data() + cfg.input_dim * cfg.hidden, idx(cfg.hidden)),
      w2(params.data() + cfg.input_dim * cfg.hidden + cfg.hidden, idx(cfg.hidden), idx(cfg.classes)),
      b2(params.data() + cfg.input_dim * cfg.hidden + cfg.hidden + cfg.hidden * cfg.classes, idx(cfg.classes)) {
  check_shape(params, cfg);
}

Eigen::MatrixXd logits(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != cfg.input_dim)
    throw std::invalid_argument("feature width does not match model input_dim");
  const MlpView net(params, cfg);
  Eigen::MatrixXd hidden = (features * net.w1).rowwise() + net.b1.transpose();
  hidden = hidden.cwiseMax(0.0);
  return (hidden * net.w2).rowwise() + net.b2.transpose();
}

LossAndGrad forward_loss(const ModelParams& params, const ModelConfig& cfg, const Batch& batch) {
  const Eigen::Index n = batch.features.rows();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (batch.labels.size() != n) throw std::invalid_argument("batch features and labels differ in count");
  if (static_cast<std::size_t>(batch.features.cols()) != cfg.input_dim)
    throw std::invalid_argument("feature width does not match model input_dim");
  const MlpView net(params, cfg);
  const auto classes = idx(cfg.classes);

  const Eigen::MatrixXd pre = (batch.features * net.w1).rowwise() + net.b1.transpose();
  const Eigen::MatrixXd act = pre.cwiseMax(0.0);
  const Eigen::MatrixXd scores = (act * net.w2).rowwise() + net.b2.transpose();

  // Row-wise softmax with the usual max shift; dscores = (p - onehot) / n.
  Eigen::MatrixXd dscores(n, classes);
  double loss_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = batch.labels[i];
    if (label < 0 || label >= classes) throw std::invalid_argument("label out of range");
    const double top = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    loss_sum += std::log(z) + top - scores(i, label);
    dscores.row(i) = e / z;
    dscores(i, label) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  dscores *= inv_n;

  LossAndGrad out;
  out.loss = loss_sum * inv_n;
  out.grads.resize(params.size());
  const std::size_t o_b1 = cfg.input_dim * cfg.hidden;
  const std::size_t o_w2 = o_b1 + cfg.hidden;
  const std::size_t o_b2 = o_w2 + cfg.hidden * cfg.classes;
  Eigen::Map<Eigen::MatrixXd> gw1(out.grads.data(), idx(cfg.input_dim), idx(cfg.hidden));
  Eigen::Map<Eigen::VectorXd> gb1(out.grads.data() + o_b1, idx(cfg.hidden));
  Eigen::Map<Eigen::MatrixXd> gw2(out.grads.data() + o_w2, idx(cfg.hidden), classes);
  Eigen::Map<Eigen::VectorXd> gb2(out.grads.data() + o_b2, classes);

  gw2.noalias() = act.transpose() * dscores;
  gb2 = dscores.colwise().sum().transpose();
  const Eigen::MatrixXd dpre = ((dscores * net.w2.transpose()).array() * (pre.array() > 0.0).cast<double>()).matrix();
  gw1.noalias() = batch.features.transpose() * dpre;
  gb1 = dpre.colwise().sum().transpose();
  return out;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double scale) {
  cfg.validate();
  Rng rng(stream_key(seed, 0x1D1));
  ModelParams p(idx(cfg.param_count()));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.uniform(-scale, scale);
  return p;
}

AdamState AdamState::fresh(const AdamConfig& config, std::size_t n) {
  return {config, 0, Eigen::VectorXd::Zero(idx(n)), Eigen::VectorXd::Zero(idx(n))};
}

AdamResult adam_step(const ModelParams& params, const ModelParams& grads, AdamState state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("Adam: parameter, gradient and moment lengths differ");
  if (!grads.allFinite()) throw DivergenceError("divergence detected");

  const AdamConfig& c = state.config;
  const Eigen::VectorXd g = grads + c.weight_decay * params;
  state.step += 1;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseProduct(g);
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const Eigen::VectorXd denom = (state.v / bc2).cwiseSqrt().array() + c.eps;
  ModelParams next = params - c.lr * ((state.m / bc1).cwiseQuotient(denom));
  if (!next.allFinite()) throw DivergenceError("divergence detected");
  return {std::move(next), std::move(state)};
}

ModelParams weighted_average(std::span<const ModelParams> models, const WeightVector& weights) {
  if (models.empty()) throw std::invalid_argument("nothing to average");
  if (weights.size() != models.size()) throw std::invalid_argument("one weight per model required");
  const Eigen::Index len = models.front().size();
  for (const auto& m : models)
    if (m.size() != len) throw std::invalid_argument("model lengths differ");

  // Start from the first term rather than zero so a unit weight is an exact copy.
  ModelParams out = weights[0] * models[0];
  ModelParams lo = models[0];
  ModelParams hi = models[0];
  for (std::size_t i = 1; i < models.size(); ++i) {
    out += weights[i] * models[i];
    lo = lo.cwiseMin(models[i]);
    hi = hi.cwiseMax(models[i]);
  }
  // A convex combination lies in [min, max] per coordinate; clamping removes
  // rounding excursions, so averaging identical models is exact.
  return out.cwiseMax(lo).cwiseMin(hi);
}

void pixel_features(const ImageTensor& img, std::size_t x, std::size_t y, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  constexpr double inv255 = 1.0 / 255.0;
  out[0] = img.at(x, y, 0) * inv255;
  out[1] = img.at(x, y, 1) * inv255;
  out[2] = img.at(x, y, 2) * inv255;
  out[3] = static_cast<double>(x) / static_cast<double>(img.width);
  out[4] = static_cast<double>(y) / static_cast<double>(img.height);
}

LabelGrid predict(const ModelParams& params, const ModelConfig& cfg, const ImageTensor& img) {
  if (cfg.input_dim != 5) throw std::invalid_argument("image prediction requires input_dim = 5");
  Eigen::MatrixXd features(idx(img.pixel_count()), 5);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) pixel_features(img, x, y, features.row(idx(y * img.width + x)));
  const Eigen::MatrixXd scores = logits(params, cfg, features);
  LabelGrid out(img.width, img.height);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// Checkpoint: "FRCM" | u16 version | u16 input_dim | u16 hidden | u16 classes |
// u32 parameter count | parameters as little-endian IEEE-754 doubles.

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw DataError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& cfg) {
  check_shape(params, cfg);
  constexpr auto u16max = std::numeric_limits<std::uint16_t>::max();
  if (cfg.input_dim > u16max || cfg.hidden > u16max || cfg.classes > u16max)
    throw std::invalid_argument("model dimensions exceed checkpoint header range");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write("FRCM", 4);
  put_le<std::uint16_t>(os, kCheckpointVersion);
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(cfg.input_dim));
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(cfg.hidden));
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(cfg.classes));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(params[i]));
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || std::string(magic.data(), 4) != "FRCM") throw DataError("not a FRCM checkpoint");
  if (get_le<std::uint16_t>(is) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config.input_dim = get_le<std::uint16_t>(is);
  ck.config.hidden = get_le<std::uint16_t>(is);
  ck.config.classes = get_le<std::uint16_t>(is);
  const auto count = get_le<std::uint32_t>(is);
  if (count != ck.config.param_count()) throw DataError("checkpoint parameter count does not match header");
  ck.params.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) ck.params[i] = std::bit_cast<double>(get_le<std::uint64_t>(is));
  return ck;
}

}  // namespace fedrc
