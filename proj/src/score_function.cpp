#include "refldiff/score_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "refldiff/parallel.hpp"

namespace refldiff {

void ScoreFunction::evaluate_batch(const Matrix& x, double t, Matrix& out) const {
  out.resize(x.rows(), x.cols());
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t begin, std::size_t end) {
    for (auto r = static_cast<Eigen::Index>(begin); r < static_cast<Eigen::Index>(end); ++r) {
      const Point s = evaluate(std::span<const double>(x.row(r).data(), static_cast<std::size_t>(x.cols())), t);
      for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = s[static_cast<std::size_t>(c)];
    }
  });
}

ToyDistribution::ToyDistribution(std::vector<ToyComponent> components, ReflectedKernel kernel)
    : components_(std::move(components)), kernel_(kernel) {
  if (components_.empty()) throw std::invalid_argument("ToyDistribution: no components");
  dim_ = static_cast<int>(components_.front().center.size());
  double total = 0.0;
  for (const auto& c : components_) {
    if (static_cast<int>(c.center.size()) != dim_ || dim_ < 1) {
      throw std::invalid_argument("ToyDistribution: inconsistent component dimensions");
    }
    if (!(c.weight > 0.0) || !(c.base_variance >= 0.0)) {
      throw std::invalid_argument("ToyDistribution: weights must be > 0 and variances >= 0");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("ToyDistribution: weights must sum to 1");
}

ToyDistribution ToyDistribution::two_bump_1d() {
  return ToyDistribution({{0.4, {0.15}, 0.002}, {0.6, {0.7}, 0.004}});
}

ToyDistribution ToyDistribution::mixture_2d() {
  return ToyDistribution({{0.3, {0.2, 0.25}, 0.003}, {0.3, {0.75, 0.3}, 0.003}, {0.4, {0.5, 0.8}, 0.003}});
}

double ToyDistribution::log_density(std::span<const double> x, double extra_variance) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("ToyDistribution: dimension mismatch");
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    logs[i] = std::log(c.weight) + kernel_.log_density_nd(c.center, x, c.base_variance + extra_variance);
    max_log = std::max(max_log, logs[i]);
  }
  if (!std::isfinite(max_log)) throw DensityUnderflow("toy mixture density underflow", max_log);
  double mass = 0.0;
  for (double l : logs) mass += std::exp(l - max_log);
  return max_log + std::log(mass);
}

Point ToyDistribution::score(std::span<const double> x, double extra_variance) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("ToyDistribution: dimension mismatch");
  const auto d = static_cast<std::size_t>(dim_);
  std::vector<double> logs(components_.size());
  std::vector<double> scores(components_.size() * d);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    const double v = c.base_variance + extra_variance;
    double log_p = std::log(c.weight);
    for (std::size_t k = 0; k < d; ++k) {
      const auto ls = kernel_.log_density_and_score_1d(c.center[k], x[k], v);
      log_p += ls.log_density;
      scores[i * d + k] = ls.score;
    }
    logs[i] = log_p;
    max_log = std::max(max_log, log_p);
  }
  if (!std::isfinite(max_log)) throw DensityUnderflow("toy mixture density underflow", max_log);
  Point out(d, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const double w = std::exp(logs[i] - max_log);
    mass += w;
    for (std::size_t k = 0; k < d; ++k) out[k] += w * scores[i * d + k];
  }
  for (auto& s : out) s /= mass;
  return out;
}

Point ToyDistribution::sample(Rng& rng) const {
  double u = rng.uniform();
  std::size_t pick = components_.size() - 1;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (u < components_[i].weight) {
      pick = i;
      break;
    }
    u -= components_[i].weight;
  }
  const auto& c = components_[pick];
  if (c.base_variance == 0.0) return c.center;
  return kernel_.sample_nd(c.center, c.base_variance, rng);
}

double toy_log_density(const ToyDistribution& toy, std::span<const double> x, double t,
                       const NoiseSchedule& schedule) {
  return toy.log_density(x, schedule.variance_from_data(t));
}

Point exact_score(const ToyDistribution& toy, std::span<const double> x, double t, const NoiseSchedule& schedule) {
  return toy.score(x, schedule.variance_from_data(t));
}

}  // namespace refldiff
