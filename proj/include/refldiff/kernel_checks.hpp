#pragma once

#include <string>
#include <vector>

#include "refldiff/kernel.hpp"
#include "refldiff/rng.hpp"

namespace refldiff {

// Property suite for the reflected kernel. Each function returns the largest
// discrepancy it saw; callers compare against their own tolerance.

// v values spaced evenly on [v_min, v_max] (a single value when n == 1).
std::vector<double> linear_grid(double lo, double hi, int n);
std::vector<double> log_grid(double lo, double hi, int n);

// max |image sum - eigen sum| over an n x n grid of (x, y) in [0, 1]^2 and the given v.
double branch_agreement_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances);

// max |int_0^1 p(y | x; v) dy - 1| over the x and v grids.
double normalization_error(const ReflectedKernel& kernel, const std::vector<double>& xs,
                           const std::vector<double>& variances);

// max |p(y | x) - p(x | y)| relative to max p, over a grid.
double symmetry_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances);

// max over x, v of |d/dy p at y = 0 and y = 1| / max_y p, by second-order
// one-sided differences.
double neumann_error(const ReflectedKernel& kernel, const std::vector<double>& xs,
                     const std::vector<double>& variances);

// max |int p(y | z; v1) p(z | x; v2) dz - p(y | x; v1 + v2)| over random tuples.
double chapman_kolmogorov_error(const ReflectedKernel& kernel, int n_tuples, Rng& rng);

// max |analytic score - central difference of log p| / max(1, |score|).
double score_fd_error(const ReflectedKernel& kernel, int n_xy, const std::vector<double>& variances);

// W1 between n folded-Gaussian draws from x and the quadrature CDF of p(. | x; v).
double sampler_w1(const ReflectedKernel& kernel, double x, double v, int n, Rng& rng);

}  // namespace refldiff
