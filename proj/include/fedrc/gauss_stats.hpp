#pragma once

// Scalar Gaussian summaries of RGB image data and the Bhattacharyya distance
// between them. All pixel samples of an image (every channel) are pooled into
// one univariate Gaussian; datasets are summarized by (n, mean, variance)
// tuples that compose up a vehicle -> edge -> cloud hierarchy.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

#include "fedrc/errors.hpp"
#include "fedrc/image.hpp"

namespace fedrc {

/// (n, mu, var) tuple describing the estimated pixel-value distribution of a
/// dataset of n images. A single image is the case n == 1.
template <typename Scalar = double>
struct GaussianSummary {
  std::uint64_t n = 1;
  Scalar mu = Scalar(0);
  Scalar var = Scalar(0);

  bool valid() const { return n >= 1 && var >= Scalar(0) && std::isfinite(mu) && std::isfinite(var); }

  friend bool operator==(const GaussianSummary&, const GaussianSummary&) = default;
};

using Summary = GaussianSummary<double>;

/// Compensated (Kahan) accumulator. Terms are added in call order.
template <typename Scalar>
class KahanSum {
 public:
  void add(Scalar x) {
    const Scalar y = x - carry_;
    const Scalar t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  Scalar value() const { return sum_; }

 private:
  Scalar sum_ = Scalar(0);
  Scalar carry_ = Scalar(0);
};

/// Mean and unbiased sample variance over all 3*W*H pixel values of `img`.
template <typename Scalar = double>
GaussianSummary<Scalar> estimate_image_gaussian(const ImageTensor& img) {
  img.validate();
  const std::size_t count = img.sample_count();
  if (count < 2) throw DataError("image too small for variance estimation");

  // The integer sum is exact, so the mean carries a single rounding.
  std::uint64_t total = 0;
  for (std::uint8_t v : img.data) total += v;
  const Scalar mean = static_cast<Scalar>(total) / static_cast<Scalar>(count);

  KahanSum<Scalar> squares;
  for (std::uint8_t v : img.data) {
    const Scalar d = static_cast<Scalar>(v) - mean;
    squares.add(d * d);
  }
  return {1, mean, squares.value() / static_cast<Scalar>(count - 1)};
}

/// Vehicle-level summary over per-image summaries:
/// mu = mean of image means, var = (1/n^2) * sum of image variances.
template <typename Scalar>
GaussianSummary<Scalar> aggregate_vehicle(std::span<const GaussianSummary<Scalar>> images) {
  if (images.empty()) throw DataError("vehicle has no data");
  KahanSum<Scalar> mu_sum;
  KahanSum<Scalar> var_sum;
  for (const auto& s : images) {
    if (s.n != 1) throw DataError("vehicle aggregation expects single-image summaries");
    if (!s.valid()) throw DataError("invalid image summary");
    mu_sum.add(s.mu);
    var_sum.add(s.var);
  }
  const auto n = static_cast<Scalar>(images.size());
  return {images.size(), mu_sum.value() / n, var_sum.value() / (n * n)};
}

/// Server-level summary (edge over vehicles, cloud over edges):
/// n = sum n_c, mu = (1/n) sum n_c mu_c, var = (1/n^2) sum n_c^2 var_c.
template <typename Scalar>
GaussianSummary<Scalar> aggregate_children(std::span<const GaussianSummary<Scalar>> children) {
  if (children.empty()) throw DataError("server has no children");
  std::uint64_t n = 0;
  KahanSum<Scalar> mu_sum;
  KahanSum<Scalar> var_sum;
  for (const auto& c : children) {
    if (!c.valid()) throw DataError("invalid child summary");
    const auto nc = static_cast<Scalar>(c.n);
    n += c.n;
    mu_sum.add(nc * c.mu);
    var_sum.add(nc * nc * c.var);
  }
  const auto total = static_cast<Scalar>(n);
  return {n, mu_sum.value() / total, var_sum.value() / (total * total)};
}

/// Closed-form Bhattacharyya distance between two univariate Gaussians, in
/// nats. The n fields are ignored. Both variances must be strictly positive.
template <typename Scalar>
Scalar bhattacharyya(const GaussianSummary<Scalar>& a, const GaussianSummary<Scalar>& b) {
  if (!(a.var > Scalar(0)) || !(b.var > Scalar(0))) throw DataError("degenerate distribution");
  if (!std::isfinite(a.mu) || !std::isfinite(b.mu) || !std::isfinite(a.var) || !std::isfinite(b.var))
    throw DataError("degenerate distribution");
  const Scalar var_sum = a.var + b.var;
  const Scalar dmu = a.mu - b.mu;
  // sqrt of the product keeps identical inputs at exactly zero.
  const Scalar spread = var_sum / (Scalar(2) * std::sqrt(a.var * b.var));
  const Scalar d = Scalar(0.25) * dmu * dmu / var_sum + Scalar(0.5) * std::log(spread);
  // log(spread) >= 0 analytically; rounding can leave a -1ulp residue.
  return d < Scalar(0) ? Scalar(0) : d;
}

/// Trapezoid-rule settings for the numeric Bhattacharyya coefficient.
struct IntegrationGrid {
  std::size_t intervals = std::size_t{1} << 16;
  double half_width_sigmas = 8.0;
};

/// Bhattacharyya coefficient integral of sqrt(f_a f_b) over
/// [min mu - k*sigma_max, max mu + k*sigma_max] by the trapezoid rule.
template <typename Scalar>
Scalar bhattacharyya_coefficient_numeric(const GaussianSummary<Scalar>& a,
                                         const GaussianSummary<Scalar>& b,
                                         const IntegrationGrid& grid = {}) {
  if (!(a.var > Scalar(0)) || !(b.var > Scalar(0))) throw DataError("degenerate distribution");
  if (grid.intervals < 2) throw std::invalid_argument("integration grid needs at least 2 intervals");
  if (grid.half_width_sigmas < 8.0)
    throw std::invalid_argument("integration range must cover +/-8 standard deviations");

  const Scalar sa = std::sqrt(a.var);
  const Scalar sb = std::sqrt(b.var);
  const Scalar smax = sa > sb ? sa : sb;
  const Scalar k = static_cast<Scalar>(grid.half_width_sigmas);
  const Scalar lo = (a.mu < b.mu ? a.mu : b.mu) - k * smax;
  const Scalar hi = (a.mu > b.mu ? a.mu : b.mu) + k * smax;
  const Scalar h = (hi - lo) / static_cast<Scalar>(grid.intervals);
  const Scalar norm = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * sa * sb);

  auto integrand = [&](Scalar x) {
    const Scalar za = (x - a.mu) / sa;
    const Scalar zb = (x - b.mu) / sb;
    return norm * std::exp(Scalar(-0.25) * (za * za + zb * zb));
  };

  KahanSum<Scalar> acc;
  acc.add(Scalar(0.5) * (integrand(lo) + integrand(hi)));
  for (std::size_t i = 1; i < grid.intervals; ++i) acc.add(integrand(lo + h * static_cast<Scalar>(i)));
  const Scalar bc = acc.value() * h;
  if (!std::isfinite(bc) || !(bc > Scalar(0)))
    throw std::runtime_error("Bhattacharyya integral underflowed or did not converge");
  return bc;
}

}  // namespace fedrc
