#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "refldiff/network.hpp"

namespace refldiff {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 128;
  int total_steps = 2000;
  double ema_rate = 0.9999;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One Monte Carlo draw of the constrained denoising objective:
// t ~ U(t_min, 1), x_t ~ p_t(. | x_0), target = grad_{x_t} log p_t(x_t | x_0),
// weight = gbar(t)^2.
struct CdsmDraw {
  Eigen::VectorXd t;
  Eigen::VectorXd sigma;
  Eigen::VectorXd weight;
  Matrix x0;
  Matrix xt;
  Matrix target;
};

CdsmDraw draw_cdsm_targets(const Matrix& x0, const NoiseSchedule& schedule, const ReflectedKernel& kernel, Rng& rng);

// Weighted squared error mean(weight * (s - target)^2) over batch and
// dimensions, summed in row order.
double cdsm_objective(const Matrix& s, const CdsmDraw& draw);

// Monte Carlo estimate of the weighted CDSM loss for any score function.
double cdsm_loss(const ScoreFunction& score, const Matrix& batch, const NoiseSchedule& schedule,
                 const ReflectedKernel& kernel, Rng& rng);

// Loss and parameter gradient for a network on a fixed draw. grad must be
// zero-initialised with parameter_count() entries.
double cdsm_loss_and_gradient(const ScoreNetwork& net, const CdsmDraw& draw, std::span<double> grad);

// ema <- rate * ema + (1 - rate) * params
void ema_update(std::span<double> ema, std::span<const double> params, double rate);

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grad);

  std::int64_t steps_taken() const { return t_; }
  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

// Owns the network, optimiser state, and EMA copy. Step k draws its noise
// from the Philox stream (seed, k), so a resumed run repeats bit-for-bit.
class Trainer {
 public:
  Trainer(ScoreNetwork net, NoiseSchedule schedule, TrainConfig config, ReflectedKernel kernel = ReflectedKernel());

  // One optimiser step on batch (rows are data points in cube coordinates).
  // Returns the loss before the update.
  double train_step(const Matrix& batch);

  const ScoreNetwork& network() const { return net_; }
  ScoreNetwork& network() { return net_; }
  ScoreNetwork ema_network() const { return ScoreNetwork(net_.shape(), ema_); }
  std::vector<double>& ema_parameters() { return ema_; }
  AdamOptimizer& optimizer() { return adam_; }
  std::int64_t step() const { return adam_.steps_taken(); }
  const NoiseSchedule& schedule() const { return schedule_; }
  const TrainConfig& config() const { return config_; }
  const ReflectedKernel& kernel() const { return kernel_; }

 private:
  ScoreNetwork net_;
  NoiseSchedule schedule_;
  TrainConfig config_;
  ReflectedKernel kernel_;
  AdamOptimizer adam_;
  std::vector<double> ema_;
};

inline constexpr std::uint64_t kBatchStreamBit = std::uint64_t{1} << 61;
inline constexpr std::uint64_t kValidationStream = std::uint64_t{1} << 60;

struct TrainingRecord {
  std::int64_t step;  // optimiser steps completed after this record
  double loss;        // pre-update minibatch loss
  double smoothed_loss;
  double validation_loss;  // EMA network on fixed noise; NaN when not evaluated
};

// Exponential smoothing of the training-loss curve.
inline constexpr double kLossSmoothing = 0.98;

// Runs trainer.config().total_steps - trainer.step() further steps. Minibatch
// k is drawn with replacement from the rows of data using stream
// (seed, k | kBatchStreamBit). Validation every val_every steps (0 = never),
// always with the same noise draw. on_step may stop training by returning false.
std::vector<TrainingRecord> fit(Trainer& trainer, const Matrix& data, const Matrix* validation = nullptr,
                                int val_every = 0,
                                const std::function<bool(const TrainingRecord&)>& on_step = nullptr,
                                double initial_smoothed_loss = std::numeric_limits<double>::quiet_NaN());

// Loss of a network on a fixed noise draw from stream (seed, kValidationStream).
double validation_loss(const ScoreNetwork& net, const Matrix& data, const NoiseSchedule& schedule,
                       const ReflectedKernel& kernel, std::uint64_t seed);

// n Dirichlet(concentration) draws reduced to the d free coordinates and
// pulled into the interior by `clip`.
std::vector<Point> make_simplex_dataset(int d, int n, std::span<const double> concentration, Rng& rng,
                                        double clip = 1e-6);

}  // namespace refldiff
