#pragma once

#include <functional>
#include <span>
#include <stdexcept>

#include "refldiff/geometry.hpp"
#include "refldiff/rng.hpp"

namespace refldiff {

// Smallest density the linear-domain API will hand out. Scores divide by the
// density, so anything below this is reported instead of returned as zero.
inline constexpr double kDensityFloor = 1e-300;

class DensityUnderflow : public std::underflow_error {
 public:
  DensityUnderflow(const std::string& what, double log_density)
      : std::underflow_error(what), log_density_(log_density) {}
  double log_density() const { return log_density_; }

 private:
  double log_density_;
};

// Method-of-images sum for reflected Brownian motion on [0, 1] with Gaussian
// variance v: sum_{m=-M}^{M} phi_v(2m + y - x) + phi_v(2m - y - x).
double gaussian_image_sum(double x, double y, double v, int n_terms);
double log_gaussian_image_sum(double x, double y, double v, int n_terms);

// Neumann eigenfunction expansion of the same kernel:
// 1 + 2 sum_{k=1}^{K} exp(-k^2 pi^2 v / 2) cos(k pi x) cos(k pi y).
double eigen_sum(double x, double y, double v, int n_terms);

struct LogDensityAndScore {
  double log_density;
  double score;  // d/dy log p(y | x; v)
};

// Transition density of reflected Brownian motion on [0, 1] and its product
// extension to [0, 1]^d. v is the accumulated Gaussian variance.
//
// Small v uses the image sum (evaluated in the log domain), large v the
// eigenfunction sum; the switch happens at sqrt(v) = crossover_sigma.
class ReflectedKernel {
 public:
  explicit ReflectedKernel(double crossover_sigma = 0.35, int n_image_terms = 5, int n_eigen_terms = 5);

  double crossover_sigma() const { return crossover_sigma_; }
  int n_image_terms() const { return n_image_terms_; }
  int n_eigen_terms() const { return n_eigen_terms_; }
  bool uses_image_branch(double v) const { return v < crossover_sigma_ * crossover_sigma_; }

  // Throws DensityUnderflow below kDensityFloor.
  double density_1d(double x, double y, double v) const;
  double log_density_1d(double x, double y, double v) const;
  double score_1d(double x, double y, double v) const;
  LogDensityAndScore log_density_and_score_1d(double x, double y, double v) const;
  double sample_1d(double x, double v, Rng& rng) const;

  double density_nd(std::span<const double> x, std::span<const double> y, double v) const;
  double log_density_nd(std::span<const double> x, std::span<const double> y, double v) const;
  Point score_nd(std::span<const double> x, std::span<const double> y, double v) const;
  Point sample_nd(std::span<const double> x, double v, Rng& rng) const;

  // Magnitude of the first neglected term of whichever series the branch
  // selects at variance v (for truncation diagnostics).
  double truncation_bound(double v) const;

 private:
  double crossover_sigma_;
  int n_image_terms_;
  int n_eigen_terms_;
};

// E[x | y] for x ~ prior on [0, 1] and y ~ p(. | x; v), by composite
// Gauss-Legendre quadrature. Throws std::domain_error if the marginal
// p_Y(y) vanishes.
double posterior_mean_1d(double y, double v, const std::function<double(double)>& prior,
                         const ReflectedKernel& kernel, int panels = 400);

// d/dy log p_Y(y) for the same model, by quadrature of the analytic score.
double marginal_score_1d(double y, double v, const std::function<double(double)>& prior,
                         const ReflectedKernel& kernel, int panels = 400);

}  // namespace refldiff
