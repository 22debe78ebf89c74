#pragma once

#include <functional>
#include <span>
#include <vector>

#include "refldiff/score_function.hpp"

namespace refldiff {

// Per-point upper bound on -log p(x), in nats.
//
//   score_term          = 1/2 int_{t_min}^1 gbar^2 E[|s|^2 - 2 s . grad log p_t(x_t | x)] dt   (Monte Carlo)
//   prior_term          = KL(p_1(. | x) || U)                                                   (quadrature)
//   reconstruction_term = E[-log p_{t_min}(x | x_hat)] + 1/2 int gbar^2 E|grad log p_t(x_t | x)|^2 dt
//
// The reconstruction term does not depend on the model. By symmetry of the
// kernel the decoder NLL is the entropy of p_{t_min}(. | x), and the Fisher
// integral is the entropy gain from t_min to 1 (de Bruijn), so it equals the
// entropy of p_1(. | x), i.e. -prior_term; both are computed by quadrature.
struct ElboReport {
  double score_term = 0.0;
  double prior_term = 0.0;
  double reconstruction_term = 0.0;
  double total_nats = 0.0;
  double bpd = 0.0;
  double mc_std_error = 0.0;
};

inline constexpr int kMinElboSamples = 16;

// x is in hypercube coordinates.
ElboReport elbo_pointwise(std::span<const double> x, const ScoreFunction& score, const NoiseSchedule& schedule,
                          const ReflectedKernel& kernel, int n_mc, Rng& rng);

// (total_nats - logdet_correction) / (dim ln 2)
double bpd(const ElboReport& report, int dim, double logdet_correction = 0.0);

// KL(p(. | x; v) || U[0, 1]) = int p log p, by composite Gauss-Legendre.
double prior_kl_1d(double x, double v, const ReflectedKernel& kernel, int nodes = 256);

struct McEstimate {
  double mean;
  double std_error;
};

// Monte Carlo of the reconstruction term as defined above (decoder NLL plus
// Fisher integral), independent of the quadrature shortcut.
McEstimate reconstruction_term_mc(std::span<const double> x, const NoiseSchedule& schedule,
                                  const ReflectedKernel& kernel, int n_mc, Rng& rng);

// Classifier-free guidance: (w + 1) s_cond - w s_uncond.
Point compose_cfg(std::span<const double> s_cond, std::span<const double> s_uncond, double w);
// Classifier guidance: w grad log q(c | x) + s.
Point compose_classifier(std::span<const double> s, std::span<const double> grad_log_classifier, double w);

// Class-labelled mixture of toy distributions; everything in closed form.
class LabelledToy {
 public:
  LabelledToy(std::vector<ToyDistribution> classes, std::vector<double> class_weights);

  static LabelledToy two_class_1d();

  int dim() const { return classes_.front().dim(); }
  std::size_t n_classes() const { return classes_.size(); }
  const ToyDistribution& conditional(std::size_t c) const { return classes_.at(c); }
  const ToyDistribution& unconditional() const { return marginal_; }

  double log_class_posterior(std::size_t c, std::span<const double> x, double extra_variance) const;
  Point class_posterior_gradient(std::size_t c, std::span<const double> x, double extra_variance) const;

 private:
  std::vector<ToyDistribution> classes_;
  std::vector<double> class_weights_;
  ToyDistribution marginal_;
};

class ClassifierFreeScore final : public ScoreFunction {
 public:
  ClassifierFreeScore(const ScoreFunction& conditional, const ScoreFunction& unconditional, double w)
      : cond_(conditional), uncond_(unconditional), w_(w) {}
  int dim() const override { return cond_.dim(); }
  Point evaluate(std::span<const double> x, double t) const override;

 private:
  const ScoreFunction& cond_;
  const ScoreFunction& uncond_;
  double w_;
};

class ClassifierGuidedScore final : public ScoreFunction {
 public:
  using Gradient = std::function<Point(std::span<const double>, double)>;
  ClassifierGuidedScore(const ScoreFunction& base, Gradient grad_log_classifier, double w)
      : base_(base), grad_(std::move(grad_log_classifier)), w_(w) {}
  int dim() const override { return base_.dim(); }
  Point evaluate(std::span<const double> x, double t) const override;

 private:
  const ScoreFunction& base_;
  Gradient grad_;
  double w_;
};

}  // namespace refldiff
