#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "refldiff/rng.hpp"
#include "refldiff/score_function.hpp"

namespace refldiff {

struct SampleSet {
  Matrix points;
  std::string method;
  int steps = 0;
  std::uint64_t seed = 0;
};

using Cdf = std::function<double(double)>;

// CDF of a density on [a, b], tabulated by composite Gauss-Legendre on
// equal cells and interpolated linearly; normalised to end at 1.
class TabulatedCdf {
 public:
  TabulatedCdf(const std::function<double(double)>& density, double a = 0.0, double b = 1.0, int cells = 4000);

  double operator()(double x) const;
  double total_mass() const { return mass_; }
  double lower() const { return a_; }
  double upper() const { return b_; }

 private:
  double a_, b_;
  double mass_;
  std::vector<double> cumulative_;
};

// Exact empirical W1 between two sample sets (integral of |F_a - F_b|).
double wasserstein1_1d(std::span<const double> a, std::span<const double> b);
// W1 between samples and a CDF on [lo, hi], integrated with `nodes` midpoints.
double wasserstein1_1d(std::span<const double> samples, const Cdf& cdf, double lo = 0.0, double hi = 1.0,
                       int nodes = 10000);

// Mean 1D W1 of projections onto random unit directions.
double sliced_w1(const Matrix& a, const Matrix& b, int n_directions, Rng& rng);

// sup_x |F_n(x) - F(x)|.
double ks_statistic_1d(std::span<const double> samples, const Cdf& cdf);

std::vector<double> column(const Matrix& m, Eigen::Index c = 0);

}  // namespace refldiff
