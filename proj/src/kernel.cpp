#include "refldiff/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "refldiff/quadrature.hpp"

namespace refldiff {

namespace {

constexpr double kPi = std::numbers::pi;

void require_positive_variance(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + ": variance must be positive and finite");
  }
}

void require_finite(double x, double y, const char* what) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument(std::string(what) + ": non-finite point");
}

// Log-domain image sum. Returns log p and, via the normalised term weights,
// the y-derivative of log p.
LogDensityAndScore image_log_sum(double x, double y, double v, int n_terms) {
  const double log_norm = -0.5 * std::log(2.0 * kPi * v);
  double max_exponent = -std::numeric_limits<double>::infinity();
  for (int m = -n_terms; m <= n_terms; ++m) {
    const double u1 = 2.0 * m + y - x;
    const double u2 = 2.0 * m - y - x;
    max_exponent = std::max({max_exponent, -u1 * u1 / (2.0 * v), -u2 * u2 / (2.0 * v)});
  }
  double mass = 0.0;
  double slope = 0.0;
  for (int m = -n_terms; m <= n_terms; ++m) {
    const double u1 = 2.0 * m + y - x;
    const double u2 = 2.0 * m - y - x;
    const double w1 = std::exp(-u1 * u1 / (2.0 * v) - max_exponent);
    const double w2 = std::exp(-u2 * u2 / (2.0 * v) - max_exponent);
    mass += w1 + w2;
    slope += -w1 * u1 / v + w2 * u2 / v;
  }
  return {log_norm + max_exponent + std::log(mass), slope / mass};
}

struct EigenTerms {
  double value;
  double derivative;  // d/dy
};

EigenTerms eigen_terms(double x, double y, double v, int n_terms) {
  // cos(k a), sin(k a) by the angle-addition recurrence.
  const double cx1 = std::cos(kPi * x);
  const double sx1 = std::sin(kPi * x);
  const double cy1 = std::cos(kPi * y);
  // sin(pi) is not exactly zero in floating point; pin the Neumann boundary.
  const double sy1 = (y == 0.0 || y == 1.0) ? 0.0 : std::sin(kPi * y);
  double cx = 1.0, sx = 0.0, cy = 1.0, sy = 0.0;
  double value = 1.0;
  double derivative = 0.0;
  for (int k = 1; k <= n_terms; ++k) {
    const double cx_next = cx * cx1 - sx * sx1;
    sx = sx * cx1 + cx * sx1;
    cx = cx_next;
    const double cy_next = cy * cy1 - sy * sy1;
    sy = sy * cy1 + cy * sy1;
    cy = cy_next;
    const double decay = std::exp(-static_cast<double>(k) * k * kPi * kPi * v / 2.0);
    value += 2.0 * decay * cx * cy;
    derivative -= 2.0 * decay * cx * k * kPi * sy;
  }
  return {value, derivative};
}

}  // namespace

double log_gaussian_image_sum(double x, double y, double v, int n_terms) {
  require_positive_variance(v, "gaussian_image_sum");
  require_finite(x, y, "gaussian_image_sum");
  return image_log_sum(x, y, v, n_terms).log_density;
}

double gaussian_image_sum(double x, double y, double v, int n_terms) {
  return std::exp(log_gaussian_image_sum(x, y, v, n_terms));
}

double eigen_sum(double x, double y, double v, int n_terms) {
  require_positive_variance(v, "eigen_sum");
  require_finite(x, y, "eigen_sum");
  return eigen_terms(x, y, v, n_terms).value;
}

ReflectedKernel::ReflectedKernel(double crossover_sigma, int n_image_terms, int n_eigen_terms)
    : crossover_sigma_(crossover_sigma), n_image_terms_(n_image_terms), n_eigen_terms_(n_eigen_terms) {
  if (!(crossover_sigma > 0.0)) throw std::invalid_argument("ReflectedKernel: crossover_sigma must be > 0");
  if (n_image_terms < 1 || n_eigen_terms < 1) {
    throw std::invalid_argument("ReflectedKernel: truncation orders must be >= 1");
  }
}

LogDensityAndScore ReflectedKernel::log_density_and_score_1d(double x, double y, double v) const {
  require_positive_variance(v, "transition density");
  require_finite(x, y, "transition density");
  if (uses_image_branch(v)) return image_log_sum(x, y, v, n_image_terms_);
  const EigenTerms terms = eigen_terms(x, y, v, n_eigen_terms_);
  if (!(terms.value > 0.0)) {
    throw DensityUnderflow("eigen series truncated to a non-positive density; raise n_eigen_terms or crossover_sigma",
                           -std::numeric_limits<double>::infinity());
  }
  return {std::log(terms.value), terms.derivative / terms.value};
}

double ReflectedKernel::log_density_1d(double x, double y, double v) const {
  return log_density_and_score_1d(x, y, v).log_density;
}

double ReflectedKernel::score_1d(double x, double y, double v) const {
  return log_density_and_score_1d(x, y, v).score;
}

double ReflectedKernel::density_1d(double x, double y, double v) const {
  const double log_p = log_density_1d(x, y, v);
  const double p = std::exp(log_p);
  if (p < kDensityFloor) {
    throw DensityUnderflow("transition density below floor at x=" + std::to_string(x) + " y=" + std::to_string(y) +
                               " v=" + std::to_string(v),
                           log_p);
  }
  return p;
}

double ReflectedKernel::sample_1d(double x, double v, Rng& rng) const {
  require_positive_variance(v, "sample_transition");
  return fold(x + std::sqrt(v) * rng.normal());
}

namespace {
void require_same_dim(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("transition kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()) + ")");
  }
}
}  // namespace

double ReflectedKernel::log_density_nd(std::span<const double> x, std::span<const double> y, double v) const {
  require_same_dim(x, y);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += log_density_1d(x[i], y[i], v);
  return total;
}

double ReflectedKernel::density_nd(std::span<const double> x, std::span<const double> y, double v) const {
  const double log_p = log_density_nd(x, y, v);
  const double p = std::exp(log_p);
  if (p < kDensityFloor) throw DensityUnderflow("product transition density below floor", log_p);
  return p;
}

Point ReflectedKernel::score_nd(std::span<const double> x, std::span<const double> y, double v) const {
  require_same_dim(x, y);
  Point out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = score_1d(x[i], y[i], v);
  return out;
}

Point ReflectedKernel::sample_nd(std::span<const double> x, double v, Rng& rng) const {
  Point out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sample_1d(x[i], v, rng);
  return out;
}

double ReflectedKernel::truncation_bound(double v) const {
  require_positive_variance(v, "truncation_bound");
  if (uses_image_branch(v)) {
    // Nearest neglected images sit at distance >= 2M from any target.
    const double u = 2.0 * n_image_terms_;
    return 2.0 * std::exp(-u * u / (2.0 * v)) / std::sqrt(2.0 * kPi * v);
  }
  const double k = n_eigen_terms_ + 1.0;
  return 2.0 * std::exp(-k * k * kPi * kPi * v / 2.0);
}

double posterior_mean_1d(double y, double v, const std::function<double(double)>& prior,
                         const ReflectedKernel& kernel, int panels) {
  const CompositeGaussLegendre rule(0.0, 1.0, panels);
  double numerator = 0.0;
  double marginal = 0.0;
  for (std::size_t i = 0; i < rule.nodes().size(); ++i) {
    const double x = rule.nodes()[i];
    const double w = rule.weights()[i] * prior(x) * std::exp(kernel.log_density_1d(x, y, v));
    numerator += w * x;
    marginal += w;
  }
  if (!(marginal > kDensityFloor)) throw std::domain_error("posterior_mean_1d: vanishing marginal density");
  return numerator / marginal;
}

double marginal_score_1d(double y, double v, const std::function<double(double)>& prior,
                         const ReflectedKernel& kernel, int panels) {
  const CompositeGaussLegendre rule(0.0, 1.0, panels);
  double slope = 0.0;
  double marginal = 0.0;
  for (std::size_t i = 0; i < rule.nodes().size(); ++i) {
    const double x = rule.nodes()[i];
    const auto ls = kernel.log_density_and_score_1d(x, y, v);
    const double w = rule.weights()[i] * prior(x) * std::exp(ls.log_density);
    slope += w * ls.score;
    marginal += w;
  }
  if (!(marginal > kDensityFloor)) throw std::domain_error("marginal_score_1d: vanishing marginal density");
  return slope / marginal;
}

}  // namespace refldiff
