#include "refldiff/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace refldiff {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

CompositeGaussLegendre::CompositeGaussLegendre(double a, double b, int panels, int order) {
  if (panels < 1 || !(b > a)) throw std::invalid_argument("CompositeGaussLegendre: bad interval");
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  const double h = (b - a) / panels;
  nodes_.reserve(static_cast<std::size_t>(panels) * order);
  weights_.reserve(nodes_.capacity());
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int k = 0; k < order; ++k) {
      nodes_.push_back(mid + 0.5 * h * x[k]);
      weights_.push_back(0.5 * h * w[k]);
    }
  }
}

double CompositeGaussLegendre::integrate(const std::function<double(double)>& f) const {
  double total = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) total += weights_[i] * f(nodes_[i]);
  return total;
}

}  // namespace refldiff
