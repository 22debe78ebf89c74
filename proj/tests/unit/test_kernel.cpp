#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "refldiff/eval.hpp"
#include "refldiff/kernel.hpp"
#include "refldiff/kernel_checks.hpp"
#include "refldiff/quadrature.hpp"

using namespace refldiff;

namespace {

double dense_image_sum(double x, double y, double v, int m_max) {
  double total = 0.0;
  for (int m = -m_max; m <= m_max; ++m) {
    for (double u : {2.0 * m + y - x, 2.0 * m - y - x}) {
      total += std::exp(-u * u / (2 * v)) / std::sqrt(2 * std::numbers::pi * v);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("image sum examples") {
  CHECK(std::abs(gaussian_image_sum(0.5, 0.5, 0.0025, 3) - 7.97885) < 1e-5);
  CHECK(std::abs(gaussian_image_sum(0.5, 0.5, 0.0025, 3) - 1.0 / std::sqrt(2 * std::numbers::pi * 0.0025)) < 1e-12);
  CHECK(std::abs(gaussian_image_sum(0.5, 0.5, 0.0025, 3) - dense_image_sum(0.5, 0.5, 0.0025, 50)) < 1e-12);
  CHECK(gaussian_image_sum(0.2, 0.9, 0.05, 5) == doctest::Approx(gaussian_image_sum(0.9, 0.2, 0.05, 5)));
  CHECK_THROWS(gaussian_image_sum(0.2, 0.9, 0.0, 5));
  // Five images of a variance-100 Gaussian leave most of its mass out; the
  // dense sum (and the eigen series) reach the uniform limit.
  CHECK(std::abs(dense_image_sum(0.2, 0.9, 100.0, 200) - 1.0) < 1e-6);
  CHECK(gaussian_image_sum(0.2, 0.9, 100.0, 5) < 0.8);
  CHECK(std::abs(eigen_sum(0.2, 0.9, 100.0, 5) - 1.0) < 1e-6);
}

TEST_CASE("eigen sum examples") {
  CHECK(std::abs(eigen_sum(0.3, 0.7, 4.0, 5) - 1.0) < 1e-8);
  const double lead = 2 * std::exp(-2 * std::numbers::pi * std::numbers::pi) * std::cos(0.3 * std::numbers::pi) *
                      std::cos(0.7 * std::numbers::pi);
  CHECK(std::abs(eigen_sum(0.3, 0.7, 4.0, 1) - (1.0 + lead)) < 1e-15);
  CHECK_THROWS(eigen_sum(0.3, 0.7, -1.0, 5));
  // Small-variance limit with a long eigen expansion.
  const double e = eigen_sum(0.4, 0.4, 1e-4, 10000);
  const double g = gaussian_image_sum(0.4, 0.4, 1e-4, 5);
  CHECK(std::abs(e - g) / g < 1e-4);
}

TEST_CASE("branch agreement with five terms each") {
  const ReflectedKernel k;
  // Agreement holds to 1e-8 once the first neglected eigen term is small enough.
  CHECK(branch_agreement_error(k, 20, linear_grid(0.11, 0.49, 5)) < 1e-8);
  // At v = 0.09 the gap is the sixth eigen term: 2 exp(-36 pi^2 v / 2) ~ 2.3e-7.
  const double gap = branch_agreement_error(k, 20, {0.09});
  const double bound = 2.0 * std::exp(-36.0 * std::numbers::pi * std::numbers::pi * 0.09 / 2.0);
  CHECK(gap > 1e-8);
  CHECK(gap <= bound * 1.01);
  CHECK(gap > 0.5 * bound);
}

TEST_CASE("branch continuity and symmetry") {
  const ReflectedKernel k;
  const double v = k.crossover_sigma() * k.crossover_sigma();
  for (double x : {0.0, 0.1, 0.5, 0.93}) {
    for (double y : {0.0, 0.3, 0.77, 1.0}) {
      CHECK(std::abs(k.density_1d(x, y, v - 1e-9) - k.density_1d(x, y, v + 1e-9)) < 1e-7);
    }
  }
  CHECK(symmetry_error(k, 15, log_grid(1e-4, 25, 8)) < 1e-12);
}

TEST_CASE("normalization and Neumann boundary") {
  const ReflectedKernel k;
  const auto xs = linear_grid(0.0, 1.0, 10);
  const auto vs = log_grid(1e-4, 25.0, 10);
  CHECK(normalization_error(k, xs, vs) < 1e-6);
  CHECK(neumann_error(k, xs, vs) < 1e-4);
}

TEST_CASE("Chapman-Kolmogorov") {
  Rng rng(17);
  CHECK(chapman_kolmogorov_error(ReflectedKernel(), 50, rng) < 1e-5);
}

TEST_CASE("transition score") {
  const ReflectedKernel k;
  for (double x : {0.0, 0.2, 0.6, 1.0}) {
    for (double v : {1e-3, 0.05, 0.3, 2.0}) {
      CHECK(std::abs(k.score_1d(x, 0.0, v)) < 1e-6);
      CHECK(std::abs(k.score_1d(x, 1.0, v)) < 1e-6);
    }
    CHECK(k.score_1d(x, 0.0, 2.0) == 0.0);  // eigen branch: exactly zero
    CHECK(k.score_1d(x, 1.0, 2.0) == 0.0);
  }
  CHECK(score_fd_error(k, 12, log_grid(1e-4, 4.0, 8)) < 1e-5);
  for (double x : linear_grid(0, 1, 11)) {
    for (double y : linear_grid(0, 1, 11)) CHECK(std::abs(k.score_1d(x, y, 4.0)) < 1e-7);
  }
}

TEST_CASE("underflow is reported, not returned as zero") {
  const ReflectedKernel k;
  CHECK_THROWS_AS(k.density_1d(0.0, 1.0, 1e-6), DensityUnderflow);
  // The log-domain path and the score stay finite.
  CHECK(std::isfinite(k.log_density_1d(0.0, 1.0, 1e-6)));
  CHECK(std::isfinite(k.score_1d(0.0, 0.9, 1e-6)));
  // An eigen series forced far below its range goes non-positive.
  const ReflectedKernel bad(0.01, 5, 1);
  CHECK_THROWS_AS(bad.log_density_1d(0.0, 1.0, 0.05), DensityUnderflow);
}

TEST_CASE("transition sampler") {
  const ReflectedKernel k;
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) CHECK(std::abs(k.sample_1d(0.37, 1e-8, rng) - 0.37) < 1e-3);

  std::vector<double> draws(100000);
  for (auto& d : draws) d = k.sample_1d(0.8, 25.0, rng);
  CHECK(ks_statistic_1d(draws, [](double y) { return std::clamp(y, 0.0, 1.0); }) < 0.005);

  // Histogram against the quadrature-normalised density, 3 sigma per bin.
  const double x = 0.1, v = 0.04;
  const int bins = 40, n = 200000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) ++counts[std::min(bins - 1, static_cast<int>(k.sample_1d(x, v, rng) * bins))];
  int outliers = 0;
  for (int b = 0; b < bins; ++b) {
    const CompositeGaussLegendre rule(double(b) / bins, double(b + 1) / bins, 4);
    const double p = rule.integrate([&](double y) { return k.density_1d(x, y, v); });
    const double expected = n * p;
    if (std::abs(counts[b] - expected) > 3.0 * std::sqrt(expected * (1 - p))) ++outliers;
  }
  CHECK(outliers <= 1);

  for (double vv : {0.01, 0.25, 4.0}) CHECK(sampler_w1(k, 0.3, vv, 100000, rng) < 0.005);
}

TEST_CASE("product kernel") {
  const ReflectedKernel k;
  const double x[] = {0.2, 0.7}, y[] = {0.25, 0.9};
  const double v = 0.03;
  CHECK(k.density_nd(x, y, v) == doctest::Approx(k.density_1d(0.2, 0.25, v) * k.density_1d(0.7, 0.9, v)));
  // Brute-force 2D image sum over reflections in both axes.
  double brute = 0.0;
  for (int m1 = -8; m1 <= 8; ++m1) {
    for (int m2 = -8; m2 <= 8; ++m2) {
      for (int s1 : {1, -1}) {
        for (int s2 : {1, -1}) {
          const double u1 = 2.0 * m1 + s1 * y[0] - x[0];
          const double u2 = 2.0 * m2 + s2 * y[1] - x[1];
          brute += std::exp(-(u1 * u1 + u2 * u2) / (2 * v)) / (2 * std::numbers::pi * v);
        }
      }
    }
  }
  CHECK(k.density_nd(x, y, v) == doctest::Approx(brute).epsilon(1e-12));
  auto s = k.score_nd(x, y, v);
  CHECK(s[0] == doctest::Approx(k.score_1d(0.2, 0.25, v)));
  CHECK(s[1] == doctest::Approx(k.score_1d(0.7, 0.9, v)));
  const double short_y[] = {0.1};
  CHECK_THROWS(k.density_nd(x, short_y, v));
}

TEST_CASE("product kernel cost is linear in dimension") {
  const ReflectedKernel k;
  auto time_for = [&](int d) {
    std::vector<double> x(d, 0.3), y(d, 0.6);
    const auto start = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (int rep = 0; rep < 200; ++rep) sink += k.log_density_nd(x, y, 0.01 + 1e-6 * rep);
    const auto stop = std::chrono::steady_clock::now();
    CHECK(std::isfinite(sink));
    return std::chrono::duration<double>(stop - start).count();
  };
  time_for(100);
  const double t100 = time_for(100), t1000 = time_for(1000);
  CHECK(t1000 / t100 < 30.0);
}

TEST_CASE("posterior mean and the Tweedie gap") {
  const ReflectedKernel k;
  const auto uniform = [](double) { return 1.0; };
  CHECK(posterior_mean_1d(0.5, 0.04, uniform, k) == doctest::Approx(0.5).epsilon(1e-12));
  // Uniform prior: p_Y is uniform so the Tweedie expression is y itself.
  const double y = 0.05, v = 0.04;
  const double tweedie = y + v * marginal_score_1d(y, v, uniform, k);
  CHECK(std::abs(tweedie - y) < 1e-9);
  CHECK(std::abs(posterior_mean_1d(y, v, uniform, k) - tweedie) > 1e-3);
  // Narrow bump prior.
  const auto bump = [](double x) { return std::exp(-(x - 0.62) * (x - 0.62) / (2 * 1e-6)); };
  CHECK(std::abs(posterior_mean_1d(0.3, 0.04, bump, k, 2000) - 0.62) < 1e-3);
  CHECK_THROWS(posterior_mean_1d(0.3, 0.04, [](double) { return 0.0; }, k));
}
