#include "refldiff/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "refldiff/parallel.hpp"

namespace refldiff {

std::string to_string(SamplerMethod method) {
  switch (method) {
    case SamplerMethod::ReflectEM:
      return "reflect-em";
    case SamplerMethod::ProjectEM:
      return "project-em";
    case SamplerMethod::PredictorCorrector:
      return "pc";
    case SamplerMethod::ProbabilityFlowODE:
      return "ode";
    case SamplerMethod::AnnealedSDE:
      return "annealed";
    case SamplerMethod::ThresholdStatic:
      return "threshold-static";
    case SamplerMethod::ThresholdDynamic:
      return "threshold-dynamic";
  }
  return "unknown";
}

std::optional<SamplerMethod> parse_sampler_method(const std::string& name) {
  for (auto m : {SamplerMethod::ReflectEM, SamplerMethod::ProjectEM, SamplerMethod::PredictorCorrector,
                 SamplerMethod::ProbabilityFlowODE, SamplerMethod::AnnealedSDE, SamplerMethod::ThresholdStatic,
                 SamplerMethod::ThresholdDynamic}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
  if (!(snr >= 0.0)) throw std::invalid_argument("sampler: snr must be >= 0");
  if (!(gbar_scale >= 0.0)) throw std::invalid_argument("sampler: gbar_scale must be >= 0");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw std::invalid_argument("sampler: percentile must lie in (0, 1]");
  if (!(corrector_eps_max > 0.0)) throw std::invalid_argument("sampler: corrector_eps_max must be > 0");
}

namespace {

// x <- O(x + drift_scale * gbar^2 * s * dt + noise_scale * gbar * sqrt(dt) * z)
template <typename Op>
void em_update(double* x, const double* s, std::size_t d, double drift_coef, double noise_coef, Rng& rng, Op op) {
  for (std::size_t k = 0; k < d; ++k) x[k] = x[k] + drift_coef * s[k] + noise_coef * rng.normal();
  op(x, d);
}

void fold_inplace(double* x, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) x[k] = fold(x[k]);
}

void clamp_inplace(double* x, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) x[k] = std::clamp(x[k], 0.0, 1.0);
}

double nearest_rank(std::vector<double> values, double percentile) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto idx = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(n)));
  idx = std::clamp<std::size_t>(idx, 1, n) - 1;
  return values[idx];
}

void dynamic_threshold_inplace(double* x, std::size_t d, double percentile) {
  std::vector<double> magnitudes(d);
  for (std::size_t k = 0; k < d; ++k) magnitudes[k] = std::abs(2.0 * x[k] - 1.0);
  const double scale = std::max(nearest_rank(magnitudes, percentile), 1.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double u = std::clamp((2.0 * x[k] - 1.0) / scale, -1.0, 1.0);
    x[k] = 0.5 * (u + 1.0);
  }
}

// Corrector step size: eps = 2 (snr |z| / |s|)^2, capped at eps_max (also
// when |s| = 0). No step at all when snr = 0.
double corrector_step(double snr, double z_norm, double s_norm, double eps_max, bool& capped) {
  capped = false;
  if (snr <= 0.0) return 0.0;
  if (s_norm == 0.0) {
    capped = true;
    return eps_max;
  }
  const double eps = 2.0 * (snr * z_norm / s_norm) * (snr * z_norm / s_norm);
  if (eps > eps_max) {
    capped = true;
    return eps_max;
  }
  return eps;
}

void langevin_move(double* x, const double* s, const double* z, std::size_t d, double eps) {
  const double noise = std::sqrt(2.0 * eps);
  for (std::size_t k = 0; k < d; ++k) x[k] = fold(x[k] + eps * s[k] + noise * z[k]);
}

Point score_at(const ScoreFunction& score, std::span<const double> x, double t) {
  Point s = score.evaluate(x, t);
  if (s.size() != x.size()) throw SamplerError("score dimension does not match the point");
  return s;
}

void check_finite(const Matrix& s, const Matrix& x, int step, double t) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    if (!s.row(r).allFinite()) {
      std::ostringstream msg;
      msg << "non-finite score at step " << step << " (t=" << t << "), chain " << r << ", x=[" << x.row(r) << "]";
      throw SamplerError(msg.str());
    }
  }
}

// One step size for the whole batch from batch-mean norms of z and s;
// per-chain norms blow up wherever a 1D score crosses zero. Returns the
// number of chains whose step was capped.
std::size_t corrector_move(Matrix& x, const Matrix& s, double snr, double eps_max, std::span<Rng> rngs) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (rngs.size() != n) throw std::invalid_argument("corrector: one RNG per chain required");
  Matrix z(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) z(r, k) = rngs[static_cast<std::size_t>(r)].normal();
  }
  bool capped = false;
  const double eps = corrector_step(snr, z.rowwise().norm().mean(), s.rowwise().norm().mean(), eps_max, capped);
  if (eps > 0.0) {
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        langevin_move(x.row(r).data(), s.row(r).data(), z.row(r).data(), d, eps);
      }
    });
  }
  return capped ? n : 0;
}

class ChainStreams {
 public:
  ChainStreams(std::uint64_t seed, std::size_t n) {
    predictor_.reserve(n);
    corrector_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      predictor_.emplace_back(seed, i);
      corrector_.emplace_back(seed, i | kCorrectorStreamBit);
    }
  }
  Rng& predictor(std::size_t i) { return predictor_[i]; }
  Rng& corrector(std::size_t i) { return corrector_[i]; }
  std::span<Rng> corrector_streams() { return corrector_; }

 private:
  std::vector<Rng> predictor_;
  std::vector<Rng> corrector_;
};

void evaluate(const ScoreFunction& score, const Matrix& x, double t, Matrix& s, int step,
              SamplerDiagnostics& diag) {
  score.evaluate_batch(x, t, s);
  diag.score_evaluations += static_cast<std::size_t>(x.rows());
  check_finite(s, x, step, t);
}

void run_sde(const ScoreFunction& score, const NoiseSchedule& schedule, const SamplerConfig& config, Matrix& x,
             ChainStreams& streams, SamplerDiagnostics& diag) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t d = static_cast<std::size_t>(x.cols());
  const double dt = (1.0 - schedule.t_min()) / config.steps;
  const double sqrt_dt = std::sqrt(dt);
  Matrix s;
  for (int step = 0; step < config.steps; ++step) {
    const double t = 1.0 - step * dt;
    const double t_next = step + 1 == config.steps ? schedule.t_min() : 1.0 - (step + 1) * dt;
    const double g2 = schedule.gbar_squared(t);
    const double g = std::sqrt(g2);
    evaluate(score, x, t, s, step, diag);

    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double* xi = x.row(static_cast<Eigen::Index>(i)).data();
        const double* si = s.row(static_cast<Eigen::Index>(i)).data();
        Rng& rng = streams.predictor(i);
        switch (config.method) {
          case SamplerMethod::ReflectEM:
          case SamplerMethod::PredictorCorrector:
            em_update(xi, si, d, g2 * dt, g * sqrt_dt, rng, fold_inplace);
            break;
          case SamplerMethod::ProjectEM:
            em_update(xi, si, d, g2 * dt, g * sqrt_dt, rng, clamp_inplace);
            break;
          case SamplerMethod::AnnealedSDE: {
            const double lambda = config.gbar_scale;
            em_update(xi, si, d, 0.5 * (1.0 + lambda * lambda) * g2 * dt, lambda * g * sqrt_dt, rng, fold_inplace);
            break;
          }
          case SamplerMethod::ThresholdStatic:
          case SamplerMethod::ThresholdDynamic: {
            for (std::size_t k = 0; k < d; ++k) xi[k] += g2 * dt * si[k];
            if (config.method == SamplerMethod::ThresholdStatic) {
              clamp_inplace(xi, d);
            } else {
              dynamic_threshold_inplace(xi, d, config.percentile);
            }
            for (std::size_t k = 0; k < d; ++k) xi[k] += g * sqrt_dt * rng.normal();
            break;
          }
          case SamplerMethod::ProbabilityFlowODE:
            break;
        }
      }
    });

    if (config.method == SamplerMethod::PredictorCorrector) {
      evaluate(score, x, t_next, s, step, diag);
      diag.corrector_caps += corrector_move(x, s, config.snr, config.corrector_eps_max, streams.corrector_streams());
    }
  }
  // Thresholded chains end with noise outside the cube; report the final
  // iterate projected onto the domain.
  if (config.method == SamplerMethod::ThresholdStatic || config.method == SamplerMethod::ThresholdDynamic) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) clamp_inplace(x.row(r).data(), d);
  }
}

std::size_t project_exits(Matrix& x) {
  std::size_t exits = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    bool outside = false;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (x(r, k) < 0.0 || x(r, k) > 1.0) {
        outside = true;
        x(r, k) = std::clamp(x(r, k), 0.0, 1.0);
      }
    }
    exits += outside;
  }
  return exits;
}

// dx/dt = -0.5 gbar(t)^2 s(x, t), integrated backwards from t = 1 to t_min.
void ode_velocity(const ScoreFunction& score, const NoiseSchedule& schedule, const Matrix& x, double t, Matrix& out,
                  int step, SamplerDiagnostics& diag) {
  evaluate(score, x, t, out, step, diag);
  out *= -0.5 * schedule.gbar_squared(t);
}

void run_ode_rk4(const ScoreFunction& score, const NoiseSchedule& schedule, const SamplerConfig& config, Matrix& x,
                 SamplerDiagnostics& diag) {
  const double h = -(1.0 - schedule.t_min()) / config.steps;
  Matrix k1, k2, k3, k4;
  for (int step = 0; step < config.steps; ++step) {
    const double t = 1.0 + step * h;
    const double t_next = step + 1 == config.steps ? schedule.t_min() : 1.0 + (step + 1) * h;
    const double t_mid = 0.5 * (t + t_next);
    ode_velocity(score, schedule, x, t, k1, step, diag);
    ode_velocity(score, schedule, x + 0.5 * h * k1, t_mid, k2, step, diag);
    ode_velocity(score, schedule, x + 0.5 * h * k2, t_mid, k3, step, diag);
    ode_velocity(score, schedule, x + h * k3, t_next, k4, step, diag);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    diag.ode_exits += project_exits(x);
  }
}

// Dormand-Prince 5(4) with one step size shared by the whole batch.
void run_ode_adaptive(const ScoreFunction& score, const NoiseSchedule& schedule, const SamplerConfig& config,
                      Matrix& x, SamplerDiagnostics& diag) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double t_end = schedule.t_min();
  double t = 1.0;
  double h = -(1.0 - t_end) / config.steps;
  Matrix k1, k2, k3, k4, k5, k6, k7;
  int step = 0;
  ode_velocity(score, schedule, x, t, k1, step, diag);
  while (t > t_end) {
    if (t + h < t_end) h = t_end - t;
    if (std::abs(h) < 1e-14) {
      std::ostringstream msg;
      msg << "adaptive ODE step size underflow at t=" << t;
      throw SamplerError(msg.str());
    }
    ode_velocity(score, schedule, x + h * a21 * k1, t + c2 * h, k2, step, diag);
    ode_velocity(score, schedule, x + h * (a31 * k1 + a32 * k2), t + c3 * h, k3, step, diag);
    ode_velocity(score, schedule, x + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h, k4, step, diag);
    ode_velocity(score, schedule, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h, k5, step, diag);
    ode_velocity(score, schedule, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5),
                 std::max(t + h, t_end), k6, step, diag);
    Matrix x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    ode_velocity(score, schedule, x_new, std::max(t + h, t_end), k7, step, diag);
    const Matrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err_norm = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double scale = config.ode_atol + config.ode_rtol * std::max(std::abs(x(r, k)), std::abs(x_new(r, k)));
        acc += (err(r, k) / scale) * (err(r, k) / scale);
      }
      err_norm = std::max(err_norm, std::sqrt(acc / static_cast<double>(x.cols())));
    }
    const double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    if (err_norm <= 1.0) {
      t = std::max(t + h, t_end);
      x = std::move(x_new);
      diag.ode_exits += project_exits(x);
      ++step;
      if (t > t_end) ode_velocity(score, schedule, x, t, k1, step, diag);
    }
    h *= factor;
  }
}

}  // namespace

SampleBatch generate(const ScoreFunction& score, const Domain& domain, const NoiseSchedule& schedule,
                     const SamplerConfig& config, std::size_t n_chains) {
  config.validate();
  const int d = domain.dim();
  if (score.dim() != d) throw std::invalid_argument("generate: score dimension does not match the domain");
  const bool thresholded =
      config.method == SamplerMethod::ThresholdStatic || config.method == SamplerMethod::ThresholdDynamic;
  if (thresholded && !domain.is_product()) {
    throw std::invalid_argument("generate: thresholding samplers need a hypercube domain");
  }

  SampleBatch result;
  Matrix& x = result.points;
  x.resize(static_cast<Eigen::Index>(n_chains), d);
  ChainStreams streams(config.seed, n_chains);
  const Domain cube = Domain::hypercube(d);
  for (std::size_t i = 0; i < n_chains; ++i) {
    const Point start = uniform_sample(cube, streams.predictor(i));
    for (int k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = start[static_cast<std::size_t>(k)];
  }

  if (config.method == SamplerMethod::ProbabilityFlowODE) {
    if (config.ode_integrator == OdeIntegrator::RK4) {
      run_ode_rk4(score, schedule, config, x, result.diagnostics);
    } else {
      run_ode_adaptive(score, schedule, config, x, result.diagnostics);
    }
  } else {
    run_sde(score, schedule, config, x, streams, result.diagnostics);
  }

  if (!domain.is_product()) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Point y = stick_break(std::span<const double>(x.row(r).data(), static_cast<std::size_t>(d)));
      for (int k = 0; k < d; ++k) x(r, k) = y[static_cast<std::size_t>(k)];
    }
  }
  return result;
}

Point forward_sample(std::span<const double> x0, double t, const NoiseSchedule& schedule, const Domain& domain,
                     const ReflectedKernel& kernel, Rng& rng) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("forward_sample: t must lie in (0, 1]");
  const double v = schedule.variance_from_data(t);
  if (domain.is_product()) return kernel.sample_nd(x0, v, rng);
  const Point cube = stick_break_inv(x0);
  return stick_break(kernel.sample_nd(cube, v, rng));
}

Point reflect_em_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                      const NoiseSchedule& schedule, Rng& rng) {
  Point out(x.begin(), x.end());
  const Point s = score_at(score, x, t);
  const double g2 = schedule.gbar_squared(t);
  em_update(out.data(), s.data(), out.size(), g2 * dt, std::sqrt(g2) * std::sqrt(dt), rng, fold_inplace);
  return out;
}

Point project_em_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                      const NoiseSchedule& schedule, Rng& rng) {
  Point out(x.begin(), x.end());
  const Point s = score_at(score, x, t);
  const double g2 = schedule.gbar_squared(t);
  em_update(out.data(), s.data(), out.size(), g2 * dt, std::sqrt(g2) * std::sqrt(dt), rng, clamp_inplace);
  return out;
}

Point annealed_step(std::span<const double> x, double t, double dt, double gbar_scale, const ScoreFunction& score,
                    const NoiseSchedule& schedule, Rng& rng) {
  Point out(x.begin(), x.end());
  const Point s = score_at(score, x, t);
  const double g2 = schedule.gbar_squared(t);
  em_update(out.data(), s.data(), out.size(), 0.5 * (1.0 + gbar_scale * gbar_scale) * g2 * dt,
            gbar_scale * std::sqrt(g2) * std::sqrt(dt), rng, fold_inplace);
  return out;
}

CorrectorResult langevin_corrector(std::span<const double> x, double t, const ScoreFunction& score, double snr,
                                   Rng& rng, double eps_max) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("langevin_corrector: t must lie in (0, 1]");
  CorrectorResult result{Point(x.begin(), x.end()), 0.0, false};
  const Point s = score_at(score, x, t);
  Point z(x.size());
  double z2 = 0.0, s2 = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    z[k] = rng.normal();
    z2 += z[k] * z[k];
    s2 += s[k] * s[k];
  }
  result.step_size = corrector_step(snr, std::sqrt(z2), std::sqrt(s2), eps_max, result.capped);
  if (result.step_size > 0.0) langevin_move(result.x.data(), s.data(), z.data(), z.size(), result.step_size);
  return result;
}

Point threshold_static_step(std::span<const double> x, double t, double dt, const ScoreFunction& score,
                            const NoiseSchedule& schedule, Rng& rng) {
  Point out(x.begin(), x.end());
  const Point s = score_at(score, x, t);
  const double g2 = schedule.gbar_squared(t);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += g2 * dt * s[k];
  clamp_inplace(out.data(), out.size());
  for (auto& v : out) v += std::sqrt(g2) * std::sqrt(dt) * rng.normal();
  return out;
}

Point threshold_dynamic_step(std::span<const double> x, double t, double dt, double percentile,
                             const ScoreFunction& score, const NoiseSchedule& schedule, Rng& rng) {
  if (!(percentile > 0.0 && percentile <= 1.0)) throw std::invalid_argument("percentile must lie in (0, 1]");
  Point out(x.begin(), x.end());
  const Point s = score_at(score, x, t);
  const double g2 = schedule.gbar_squared(t);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += g2 * dt * s[k];
  dynamic_threshold_inplace(out.data(), out.size(), percentile);
  for (auto& v : out) v += std::sqrt(g2) * std::sqrt(dt) * rng.normal();
  return out;
}

std::size_t langevin_corrector_batch(Matrix& x, double t, const ScoreFunction& score, double snr, std::span<Rng> rngs,
                                     double eps_max) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("langevin_corrector: t must lie in (0, 1]");
  Matrix s;
  score.evaluate_batch(x, t, s);
  return corrector_move(x, s, snr, eps_max, rngs);
}

Point dynamic_threshold(std::span<const double> x, double percentile) {
  if (!(percentile > 0.0 && percentile <= 1.0)) throw std::invalid_argument("percentile must lie in (0, 1]");
  Point out(x.begin(), x.end());
  dynamic_threshold_inplace(out.data(), out.size(), percentile);
  return out;
}

}  // namespace refldiff
