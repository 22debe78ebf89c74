#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "refldiff/score_function.hpp"

namespace refldiff {

enum class SamplerMethod {
  ReflectEM,
  ProjectEM,
  PredictorCorrector,
  ProbabilityFlowODE,
  AnnealedSDE,
  ThresholdStatic,
  ThresholdDynamic,
};

enum class OdeIntegrator { RK4, DormandPrince };

std::string to_string(SamplerMethod method);
std::optional<SamplerMethod> parse_sampler_method(const std::string& name);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::ReflectEM;
  int steps = 1000;
  double snr = 0.03;          // corrector only
  double gbar_scale = 1.0;    // annealed SDE: noise scale lambda, ghat = lambda * gbar
  double percentile = 1.0;    // dynamic thresholding, in (0, 1]
  double corrector_eps_max = 1.0;
  OdeIntegrator ode_integrator = OdeIntegrator::RK4;
  double ode_atol = 1e-5;
  double ode_rtol = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SamplerDiagnostics {
  std::size_t ode_exits = 0;       // chains projected back after an ODE step
  std::size_t corrector_caps = 0;  // chain-steps whose corrector step hit corrector_eps_max
  std::size_t score_evaluations = 0;
};

struct SampleBatch {
  Matrix points;  // one row per chain, in the coordinates of the domain
  SamplerDiagnostics diagnostics;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs n_chains independent reverse-time chains from x_1 ~ U(Omega) down to
// t_min on a uniform time grid. Chain i draws from Philox streams keyed by
// (config.seed, i), so row i does not depend on the thread count, nor on
// n_chains except under PC, whose corrector step size uses batch-mean norms.
// On the simplex the chains run in stick-breaking cube coordinates (the score
// must be a cube-coordinate score) and are mapped back at the end.
SampleBatch generate(const ScoreFunction& score, const Domain& domain, const NoiseSchedule& schedule,
                     const SamplerConfig& config, std::size_t n_chains);

// Exact forward draw x_t ~ p_t(. | x0).
Point forward_sample(std::span<const double> x0, double t, const NoiseSchedule& schedule, const Domain& domain,
                     const ReflectedKernel& kernel, Rng& rng);

// Single-point step operators (hypercube coordinates). `score` is evaluated at
// (x, t); dt > 0 is the time decrement.
Point reflect_em_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                      const NoiseSchedule& schedule, Rng& rng);
Point project_em_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                      const NoiseSchedule& schedule, Rng& rng);
Point annealed_step(std::span<const double> x, double t, double dt, double gbar_scale, const ScoreFunction& score,
                    const NoiseSchedule& schedule, Rng& rng);

struct CorrectorResult {
  Point x;
  double step_size;
  bool capped;
};
// One reflected Langevin step x' = fold(x + eps s + sqrt(2 eps) z) with
// eps = 2 (snr |z| / |s|)^2, capped at eps_max (also when |s| = 0).
CorrectorResult langevin_corrector(std::span<const double> x, double t, const ScoreFunction& score, double snr,
                                   Rng& rng, double eps_max = 1.0);

// Batched corrector as used by PC sampling: one eps for all rows from the
// batch-mean norms of z and s, row i drawing z from rngs[i]. Returns the
// number of rows whose step was capped.
std::size_t langevin_corrector_batch(Matrix& x, double t, const ScoreFunction& score, double snr, std::span<Rng> rngs,
                                     double eps_max = 1.0);

// Thresholding baselines: operator applied to the deterministic update, noise
// added afterwards, so the result may lie outside the cube.
Point threshold_static_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                            const NoiseSchedule& schedule, Rng& rng);
Point threshold_dynamic_step(std::span<const double> x, double t, double dt, double percentile,
                             const ScoreFunction& score, const NoiseSchedule& schedule, Rng& rng);

// Dynamic thresholding operator on [0, 1]^d (percentile rescale in centred
// coordinates, then clamp).
Point dynamic_threshold(std::span<const double> x, double percentile);

}  // namespace refldiff
