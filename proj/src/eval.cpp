#include "refldiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "refldiff/quadrature.hpp"

namespace refldiff {

TabulatedCdf::TabulatedCdf(const std::function<double(double)>& density, double a, double b, int cells)
    : a_(a), b_(b), cumulative_(static_cast<std::size_t>(cells) + 1, 0.0) {
  if (cells < 1 || !(b > a)) throw std::invalid_argument("TabulatedCdf: bad grid");
  std::vector<double> x, w;
  gauss_legendre(6, x, w);
  const double h = (b - a) / cells;
  for (int c = 0; c < cells; ++c) {
    const double mid = a + (c + 0.5) * h;
    double cell = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) cell += 0.5 * h * w[k] * density(mid + 0.5 * h * x[k]);
    cumulative_[static_cast<std::size_t>(c) + 1] = cumulative_[static_cast<std::size_t>(c)] + cell;
  }
  mass_ = cumulative_.back();
  if (!(mass_ > 0.0)) throw std::invalid_argument("TabulatedCdf: density has no mass");
  for (auto& c : cumulative_) c /= mass_;
}

double TabulatedCdf::operator()(double x) const {
  if (x <= a_) return 0.0;
  if (x >= b_) return 1.0;
  const double pos = (x - a_) / (b_ - a_) * static_cast<double>(cumulative_.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), cumulative_.size() - 2);
  const double frac = pos - static_cast<double>(i);
  return cumulative_[i] + frac * (cumulative_[i + 1] - cumulative_[i]);
}

double wasserstein1_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample set");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  // Sweep the merged support accumulating |F_a - F_b| * gap.
  std::size_t i = 0, j = 0;
  double prev = std::min(sa.front(), sb.front());
  double total = 0.0;
  while (i < sa.size() || j < sb.size()) {
    double next;
    if (j == sb.size() || (i < sa.size() && sa[i] <= sb[j])) {
      next = sa[i];
    } else {
      next = sb[j];
    }
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < sa.size() && sa[i] == next) ++i;
    while (j < sb.size() && sb[j] == next) ++j;
    prev = next;
  }
  return total;
}

double wasserstein1_1d(std::span<const double> samples, const Cdf& cdf, double lo, double hi, int nodes) {
  if (samples.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample set");
  if (nodes < 1 || !(hi > lo)) throw std::invalid_argument("wasserstein1_1d: bad integration grid");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double h = (hi - lo) / nodes;
  double total = 0.0;
  for (int k = 0; k < nodes; ++k) {
    const double x = lo + (k + 0.5) * h;
    const double empirical =
        static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / n;
    total += std::abs(empirical - cdf(x)) * h;
  }
  return total;
}

double sliced_w1(const Matrix& a, const Matrix& b, int n_directions, Rng& rng) {
  if (a.cols() != b.cols()) throw std::invalid_argument("sliced_w1: dimension mismatch");
  if (n_directions < 1) throw std::invalid_argument("sliced_w1: need at least one direction");
  const Eigen::Index d = a.cols();
  double total = 0.0;
  for (int k = 0; k < n_directions; ++k) {
    Eigen::VectorXd u(d);
    for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
    u.normalize();
    const Eigen::VectorXd pa = a * u;
    const Eigen::VectorXd pb = b * u;
    total += wasserstein1_1d(std::span<const double>(pa.data(), static_cast<std::size_t>(pa.size())),
                             std::span<const double>(pb.data(), static_cast<std::size_t>(pb.size())));
  }
  return total / n_directions;
}

double ks_statistic_1d(std::span<const double> samples, const Cdf& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic_1d: empty sample set");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    sup = std::max({sup, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return sup;
}

std::vector<double> column(const Matrix& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

}  // namespace refldiff
