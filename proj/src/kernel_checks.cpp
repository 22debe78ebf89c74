#include "refldiff/kernel_checks.hpp"

#include <algorithm>
#include <cmath>

#include "refldiff/eval.hpp"
#include "refldiff/quadrature.hpp"

namespace refldiff {

namespace {

// Panels fine enough to resolve a Gaussian of variance v on [0, 1].
int panels_for(double v) {
  const double sigma = std::sqrt(v);
  return std::clamp(static_cast<int>(std::ceil(4.0 / sigma)), 16, 800);
}

double density(const ReflectedKernel& kernel, double x, double y, double v) {
  return std::exp(kernel.log_density_1d(x, y, v));
}

}  // namespace

std::vector<double> linear_grid(double lo, double hi, int n) {
  if (n == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return out;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> out = linear_grid(std::log(lo), std::log(hi), n);
  for (auto& v : out) v = std::exp(v);
  return out;
}

double branch_agreement_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances) {
  double worst = 0.0;
  const auto grid = linear_grid(0.0, 1.0, n_xy);
  for (double v : variances) {
    for (double x : grid) {
      for (double y : grid) {
        const double a = gaussian_image_sum(x, y, v, kernel.n_image_terms());
        const double b = eigen_sum(x, y, v, kernel.n_eigen_terms());
        worst = std::max(worst, std::abs(a - b));
      }
    }
  }
  return worst;
}

double normalization_error(const ReflectedKernel& kernel, const std::vector<double>& xs,
                           const std::vector<double>& variances) {
  double worst = 0.0;
  for (double v : variances) {
    const CompositeGaussLegendre rule(0.0, 1.0, panels_for(v));
    for (double x : xs) {
      const double mass = rule.integrate([&](double y) { return density(kernel, x, y, v); });
      worst = std::max(worst, std::abs(mass - 1.0));
    }
  }
  return worst;
}

double symmetry_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances) {
  double worst = 0.0;
  const auto grid = linear_grid(0.0, 1.0, n_xy);
  for (double v : variances) {
    double peak = 0.0, gap = 0.0;
    for (double x : grid) {
      for (double y : grid) {
        const double a = density(kernel, x, y, v);
        peak = std::max(peak, a);
        gap = std::max(gap, std::abs(a - density(kernel, y, x, v)));
      }
    }
    worst = std::max(worst, gap / peak);
  }
  return worst;
}

double neumann_error(const ReflectedKernel& kernel, const std::vector<double>& xs,
                     const std::vector<double>& variances) {
  double worst = 0.0;
  for (double v : variances) {
    const double h = 1e-3 * std::min(std::sqrt(v), 1.0);
    for (double x : xs) {
      // The peak of p(. | x) is at y = x or at the nearer boundary.
      const double peak = std::max({density(kernel, x, x, v), density(kernel, x, 0.0, v), density(kernel, x, 1.0, v)});
      const double d0 =
          (-3.0 * density(kernel, x, 0.0, v) + 4.0 * density(kernel, x, h, v) - density(kernel, x, 2.0 * h, v)) /
          (2.0 * h);
      const double d1 = (3.0 * density(kernel, x, 1.0, v) - 4.0 * density(kernel, x, 1.0 - h, v) +
                         density(kernel, x, 1.0 - 2.0 * h, v)) /
                        (2.0 * h);
      worst = std::max({worst, std::abs(d0) / peak, std::abs(d1) / peak});
    }
  }
  return worst;
}

double chapman_kolmogorov_error(const ReflectedKernel& kernel, int n_tuples, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < n_tuples; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    // Variances log-uniform on [1e-3, 1]: both branches and the crossover.
    const double v1 = std::exp(std::log(1e-3) + rng.uniform() * std::log(1e3));
    const double v2 = std::exp(std::log(1e-3) + rng.uniform() * std::log(1e3));
    const CompositeGaussLegendre rule(0.0, 1.0, panels_for(std::min(v1, v2)));
    const double lhs =
        rule.integrate([&](double z) { return density(kernel, z, y, v1) * density(kernel, x, z, v2); });
    worst = std::max(worst, std::abs(lhs - density(kernel, x, y, v1 + v2)));
  }
  return worst;
}

double score_fd_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances) {
  double worst = 0.0;
  // Interior points only; central differences need room on both sides.
  const auto grid = linear_grid(0.02, 0.98, n_xy);
  for (double v : variances) {
    const double h = 1e-4 * std::min(std::sqrt(v), 1.0);
    for (double x : grid) {
      for (double y : grid) {
        const double fd = (kernel.log_density_1d(x, y + h, v) - kernel.log_density_1d(x, y - h, v)) / (2.0 * h);
        const double s = kernel.score_1d(x, y, v);
        worst = std::max(worst, std::abs(s - fd) / std::max(1.0, std::abs(s)));
      }
    }
  }
  return worst;
}

double sampler_w1(const ReflectedKernel& kernel, double x, double v, int n, Rng& rng) {
  std::vector<double> draws(static_cast<std::size_t>(n));
  for (auto& d : draws) d = kernel.sample_1d(x, v, rng);
  const TabulatedCdf cdf([&](double y) { return density(kernel, x, y, v); });
  return wasserstein1_1d(draws, cdf);
}

}  // namespace refldiff
