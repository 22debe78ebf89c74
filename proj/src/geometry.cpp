#include "refldiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace refldiff {

namespace {

void require_finite(std::span<const double> p, const char* what) {
  for (double v : p) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
  }
}

void require_dim(std::span<const double> p, const Domain& domain, const char* what) {
  if (static_cast<int>(p.size()) != domain.dim()) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(domain.dim()) +
                                " coordinates, got " + std::to_string(p.size()));
  }
}

// Projection onto {x >= 0, sum x = 1} by the sort-and-threshold rule.
Point project_probability_simplex(std::span<const double> p) {
  Point sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  Point out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::max(p[i] - theta, 0.0);
  return out;
}

}  // namespace

Domain Domain::hypercube(int dim) {
  if (dim < 1) throw std::invalid_argument("hypercube dimension must be >= 1");
  return Domain(DomainKind::UnitHypercube, dim);
}

Domain Domain::simplex(int dim) {
  if (dim < 1) throw std::invalid_argument("simplex dimension must be >= 1");
  return Domain(DomainKind::ProjectedSimplex, dim);
}

bool Domain::contains(std::span<const double> p, double tol) const {
  if (static_cast<int>(p.size()) != dim_) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= -tol)) return false;
    if (kind_ != DomainKind::ProjectedSimplex && v > 1.0 + tol) return false;
    sum += v;
  }
  return kind_ != DomainKind::ProjectedSimplex || sum <= 1.0 + tol;
}

std::string Domain::name() const {
  switch (kind_) {
    case DomainKind::UnitInterval:
      return "interval";
    case DomainKind::UnitHypercube:
      return "hypercube";
    case DomainKind::ProjectedSimplex:
      return "simplex";
  }
  return "unknown";
}

double fold(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("fold: non-finite input");
  double r = std::fmod(x, 2.0);  // exact
  if (r < 0.0) r += 2.0;
  if (r >= 2.0) r = 0.0;
  return r <= 1.0 ? r : 2.0 - r;
}

Point fold_point(std::span<const double> p, const Domain& domain) {
  if (!domain.is_product()) {
    throw std::invalid_argument("fold_point: reflection on the simplex goes through the cube map");
  }
  require_dim(p, domain, "fold_point");
  Point out(p.size());
  std::transform(p.begin(), p.end(), out.begin(), [](double v) { return fold(v); });
  return out;
}

Point project(std::span<const double> p, const Domain& domain) {
  require_finite(p, "project");
  require_dim(p, domain, "project");
  Point out(p.size());
  if (domain.is_product()) {
    std::transform(p.begin(), p.end(), out.begin(), [](double v) { return std::clamp(v, 0.0, 1.0); });
    return out;
  }
  std::transform(p.begin(), p.end(), out.begin(), [](double v) { return std::max(v, 0.0); });
  if (std::accumulate(out.begin(), out.end(), 0.0) <= 1.0) return out;
  // The sum constraint is active, so the nearest point lies on the face sum = 1.
  return project_probability_simplex(p);
}

Point stick_break(std::span<const double> x) {
  Point y(x.size());
  double remaining = 1.0;
  for (std::size_t k = x.size(); k-- > 0;) {
    y[k] = x[k] * remaining;
    remaining *= 1.0 - x[k];
  }
  return y;
}

Point stick_break_inv(std::span<const double> y, double tol) {
  Point x(y.size());
  // Shrink the stick multiplicatively, mirroring stick_break; 1 - sum(y)
  // cancels badly once most of the stick is used up.
  double remaining = 1.0;
  for (std::size_t k = y.size(); k-- > 0;) {
    if (remaining <= tol) {
      throw BoundaryDegeneracy("stick_break_inv: vanishing stick at coordinate " + std::to_string(k));
    }
    x[k] = y[k] / remaining;
    remaining *= 1.0 - x[k];
  }
  return x;
}

double stick_break_logdet(std::span<const double> x) {
  double logdet = 0.0;
  for (std::size_t j = 1; j < x.size(); ++j) {
    const double stick = 1.0 - x[j];
    if (stick <= 0.0) return -std::numeric_limits<double>::infinity();
    logdet += static_cast<double>(j) * std::log(stick);
  }
  return logdet;
}

Point uniform_sample(const Domain& domain, Rng& rng) {
  const auto d = static_cast<std::size_t>(domain.dim());
  Point out(d);
  if (domain.is_product()) {
    for (auto& v : out) v = rng.uniform();
    return out;
  }
  double total = 0.0;
  for (auto& v : out) {
    v = -std::log(rng.uniform_open());
    total += v;
  }
  total += -std::log(rng.uniform_open());  // slack coordinate
  for (auto& v : out) v /= total;
  return out;
}

}  // namespace refldiff
