#include "refldiff/inference.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "refldiff/quadrature.hpp"

namespace refldiff {

namespace {

void check_same_size(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  double std_error() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

[[noreturn]] void rethrow_with_time(const DensityUnderflow& e, double t) {
  std::ostringstream msg;
  msg << e.what() << " (at t = " << t << ")";
  throw DensityUnderflow(msg.str(), e.log_density());
}

}  // namespace

double prior_kl_1d(double x, double v, const ReflectedKernel& kernel, int nodes) {
  if (nodes < 8 || nodes % 8 != 0) throw std::invalid_argument("prior_kl_1d: nodes must be a positive multiple of 8");
  const CompositeGaussLegendre rule(0.0, 1.0, nodes / 8, 8);
  return rule.integrate([&](double y) {
    const double lp = kernel.log_density_1d(x, y, v);
    return std::exp(lp) * lp;
  });
}

ElboReport elbo_pointwise(std::span<const double> x, const ScoreFunction& score, const NoiseSchedule& schedule,
                          const ReflectedKernel& kernel, int n_mc, Rng& rng) {
  if (n_mc < kMinElboSamples) {
    throw std::invalid_argument("elbo_pointwise: n_mc must be at least " + std::to_string(kMinElboSamples));
  }
  if (static_cast<int>(x.size()) != score.dim()) throw std::invalid_argument("elbo_pointwise: dimension mismatch");
  for (double xi : x) {
    if (!(xi >= 0.0 && xi <= 1.0)) throw std::invalid_argument("elbo_pointwise: point outside the unit cube");
  }

  const double t_min = schedule.t_min();
  const double span = 1.0 - t_min;
  Moments score_mc;
  for (int k = 0; k < n_mc; ++k) {
    const double t = t_min + (k + rng.uniform()) * span / n_mc;
    try {
      const double v = schedule.variance_from_data(t);
      const Point xt = kernel.sample_nd(x, v, rng);
      const Point target = kernel.score_nd(x, xt, v);
      const Point s = score.evaluate(xt, t);
      score_mc.add(0.5 * span * schedule.gbar_squared(t) * (dot(s, s) - 2.0 * dot(s, target)));
    } catch (const DensityUnderflow& e) {
      rethrow_with_time(e, t);
    }
  }

  // The kernel factorizes, so the prior KL is a per-coordinate sum.
  const double v1 = schedule.variance_from_data(1.0);
  double prior = 0.0;
  for (double xi : x) prior += prior_kl_1d(xi, v1, kernel);

  ElboReport r;
  r.score_term = score_mc.mean();
  r.prior_term = prior;
  r.reconstruction_term = -prior;
  r.total_nats = r.score_term + r.prior_term + r.reconstruction_term;
  r.mc_std_error = score_mc.std_error();
  r.bpd = bpd(r, static_cast<int>(x.size()));
  return r;
}

double bpd(const ElboReport& report, int dim, double logdet_correction) {
  if (dim < 1) throw std::invalid_argument("bpd: dim must be positive");
  return (report.total_nats - logdet_correction) / (dim * std::numbers::ln2);
}

McEstimate reconstruction_term_mc(std::span<const double> x, const NoiseSchedule& schedule,
                                  const ReflectedKernel& kernel, int n_mc, Rng& rng) {
  if (n_mc < kMinElboSamples) throw std::invalid_argument("reconstruction_term_mc: too few samples");
  const double t_min = schedule.t_min();
  const double span = 1.0 - t_min;
  const double v_min = schedule.variance_from_data(t_min);
  Moments mc;
  for (int k = 0; k < n_mc; ++k) {
    // Decoder NLL and one stratified Fisher sample per draw.
    const Point x_hat = kernel.sample_nd(x, v_min, rng);
    const double nll = -kernel.log_density_nd(x_hat, x, v_min);

    const double t = t_min + (k + rng.uniform()) * span / n_mc;
    const double v = schedule.variance_from_data(t);
    const Point xt = kernel.sample_nd(x, v, rng);
    const Point g = kernel.score_nd(x, xt, v);
    mc.add(nll + 0.5 * span * schedule.gbar_squared(t) * dot(g, g));
  }
  return {mc.mean(), mc.std_error()};
}

Point compose_cfg(std::span<const double> s_cond, std::span<const double> s_uncond, double w) {
  check_same_size(s_cond, s_uncond, "compose_cfg");
  Point out(s_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (w + 1.0) * s_cond[i] - w * s_uncond[i];
  return out;
}

Point compose_classifier(std::span<const double> s, std::span<const double> grad_log_classifier, double w) {
  check_same_size(s, grad_log_classifier, "compose_classifier");
  Point out(s.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * grad_log_classifier[i] + s[i];
  return out;
}

namespace {

ToyDistribution pooled(const std::vector<ToyDistribution>& classes, const std::vector<double>& weights) {
  if (classes.empty()) throw std::invalid_argument("LabelledToy: no classes");
  if (classes.size() != weights.size()) throw std::invalid_argument("LabelledToy: one weight per class required");
  std::vector<ToyComponent> all;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].dim() != classes.front().dim()) throw std::invalid_argument("LabelledToy: class dimension mismatch");
    for (const auto& comp : classes[c].components()) all.push_back({weights[c] * comp.weight, comp.center, comp.base_variance});
  }
  return ToyDistribution(std::move(all), classes.front().kernel());
}

}  // namespace

LabelledToy::LabelledToy(std::vector<ToyDistribution> classes, std::vector<double> class_weights)
    : classes_(std::move(classes)), class_weights_(std::move(class_weights)), marginal_(pooled(classes_, class_weights_)) {}

LabelledToy LabelledToy::two_class_1d() {
  return LabelledToy({ToyDistribution({{1.0, {0.25}, 0.004}}), ToyDistribution({{1.0, {0.7}, 0.004}})}, {0.5, 0.5});
}

double LabelledToy::log_class_posterior(std::size_t c, std::span<const double> x, double extra_variance) const {
  return std::log(class_weights_.at(c)) + classes_.at(c).log_density(x, extra_variance) -
         marginal_.log_density(x, extra_variance);
}

Point LabelledToy::class_posterior_gradient(std::size_t c, std::span<const double> x, double extra_variance) const {
  Point g = classes_.at(c).score(x, extra_variance);
  const Point m = marginal_.score(x, extra_variance);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= m[i];
  return g;
}

Point ClassifierFreeScore::evaluate(std::span<const double> x, double t) const {
  return compose_cfg(cond_.evaluate(x, t), uncond_.evaluate(x, t), w_);
}

Point ClassifierGuidedScore::evaluate(std::span<const double> x, double t) const {
  return compose_classifier(base_.evaluate(x, t), grad_(x, t), w_);
}

}  // namespace refldiff
