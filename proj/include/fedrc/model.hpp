#pragma once

// Per-pixel classifier: a one-hidden-layer ReLU perceptron over pixel colour
// and position, trained with Adam on mean cross-entropy. Parameters live in a
// single flat vector so that federated averaging is a plain convex combination.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include <Eigen/Dense>

#include "fedrc/image.hpp"
#include "fedrc/weighting.hpp"

namespace fedrc {

using ModelParams = Eigen::VectorXd;

struct ModelConfig {
  std::size_t input_dim = 5;  ///< r, g, b in [0,1], x/W, y/H
  std::size_t hidden = 16;
  std::size_t classes = 4;

  std::size_t param_count() const { return input_dim * hidden + hidden + hidden * classes + classes; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Read-only views of the weight blocks inside a flat parameter vector.
/// Layout: W1 (input_dim x hidden), b1 (hidden), W2 (hidden x classes), b2 (classes).
struct MlpView {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> w2;
  Eigen::Map<const Eigen::VectorXd> b2;

  MlpView(const ModelParams& params, const ModelConfig& cfg);
};

struct Batch {
  Eigen::MatrixXd features;  ///< one row per sample
  Eigen::VectorXi labels;
};

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean cross-entropy of the batch and its exact gradient.
LossAndGrad forward_loss(const ModelParams& params, const ModelConfig& cfg, const Batch& batch);

/// Class scores (pre-softmax) for every row of `features`.
Eigen::MatrixXd logits(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& features);

/// Uniform in [-scale, scale], drawn from `seed`.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.1);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;  ///< L2 term added to the gradient
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  static AdamState fresh(const AdamConfig& config, std::size_t n);
};

struct AdamResult {
  ModelParams params;
  AdamState state;
};

/// One bias-corrected Adam update. Throws DivergenceError on non-finite
/// gradients.
AdamResult adam_step(const ModelParams& params, const ModelParams& grads, AdamState state);

/// Coordinate-wise sum_i weights[i] * models[i], accumulated in index order.
ModelParams weighted_average(std::span<const ModelParams> models, const WeightVector& weights);

/// Five-feature encoding of pixel (x, y).
void pixel_features(const ImageTensor& img, std::size_t x, std::size_t y, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out);

/// Arg-max class per pixel.
LabelGrid predict(const ModelParams& params, const ModelConfig& cfg, const ImageTensor& img);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedrc
