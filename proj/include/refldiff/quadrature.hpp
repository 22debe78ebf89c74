#pragma once

#include <functional>
#include <vector>

namespace refldiff {

// Fixed-order composite Gauss-Legendre rule on [a, b].
class CompositeGaussLegendre {
 public:
  CompositeGaussLegendre(double a, double b, int panels, int order = 8);

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  double integrate(const std::function<double(double)>& f) const;

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace refldiff
