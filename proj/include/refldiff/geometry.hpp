#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "refldiff/rng.hpp"

namespace refldiff {

using Point = std::vector<double>;

enum class DomainKind { UnitInterval, UnitHypercube, ProjectedSimplex };

// The constraint set. ProjectedSimplex(d) is {x in R^d : x_i >= 0, sum x_i <= 1};
// the slack coordinate 1 - sum x_i is implicit.
class Domain {
 public:
  static Domain interval() { return Domain(DomainKind::UnitInterval, 1); }
  static Domain hypercube(int dim);
  static Domain simplex(int dim);

  DomainKind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool is_product() const { return kind_ != DomainKind::ProjectedSimplex; }

  bool contains(std::span<const double> p, double tol = 0.0) const;
  std::string name() const;

  bool operator==(const Domain&) const = default;

 private:
  Domain(DomainKind kind, int dim) : kind_(kind), dim_(dim) {}
  DomainKind kind_;
  int dim_;
};

// Raised when the simplex inverse map hits a vanishing stick.
class BoundaryDegeneracy : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Period-2 triangle wave: the image of x after repeated reflection at 0 and 1.
double fold(double x);

Point fold_point(std::span<const double> p, const Domain& domain);

// Euclidean nearest point of the domain.
Point project(std::span<const double> p, const Domain& domain);

// Cube -> projected simplex: y_i = x_i * prod_{j>i} (1 - x_j).
Point stick_break(std::span<const double> x);

// Projected simplex -> cube: x_i = y_i / (1 - sum_{j>i} y_j).
// Throws BoundaryDegeneracy when a denominator is <= tol; tiny sticks are fine
// otherwise, the division stays relative.
Point stick_break_inv(std::span<const double> y, double tol = 0.0);

// log |det d stick_break / dx|. The Jacobian is upper triangular with
// diagonal prod_{j>i} (1 - x_j), so the result is sum_j (j-1) log(1 - x_j)
// (1-based j). Returns -inf when a stick collapses (x_j = 1, j >= 2).
double stick_break_logdet(std::span<const double> x);

// Exact uniform draw. The simplex uses normalised exponential spacings:
// with E_0..E_d iid Exp(1), (E_0, ..., E_{d-1}) / sum E is uniform on the
// projected simplex.
Point uniform_sample(const Domain& domain, Rng& rng);

}  // namespace refldiff
