#include "refldiff/training.hpp"

#include <cmath>
#include <sstream>

namespace refldiff {

CdsmDraw draw_cdsm_targets(const Matrix& x0, const NoiseSchedule& schedule, const ReflectedKernel& kernel, Rng& rng) {
  const Eigen::Index batch = x0.rows();
  const Eigen::Index d = x0.cols();
  CdsmDraw draw;
  draw.t.resize(batch);
  draw.sigma.resize(batch);
  draw.weight.resize(batch);
  draw.x0 = x0;
  draw.xt.resize(batch, d);
  draw.target.resize(batch, d);
  const double t_min = schedule.t_min();
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double t = t_min + (1.0 - t_min) * rng.uniform();
    const double v = schedule.variance_from_data(t);
    draw.t[b] = t;
    draw.sigma[b] = schedule.sigma(t);
    draw.weight[b] = schedule.gbar_squared(t);
    for (Eigen::Index k = 0; k < d; ++k) {
      const double y = kernel.sample_1d(x0(b, k), v, rng);
      draw.xt(b, k) = y;
      draw.target(b, k) = kernel.score_1d(x0(b, k), y, v);
    }
  }
  return draw;
}

double cdsm_objective(const Matrix& s, const CdsmDraw& draw) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < s.rows(); ++b) {
    double row = 0.0;
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      const double diff = s(b, k) - draw.target(b, k);
      row += diff * diff;
    }
    const double term = draw.weight[b] * row;
    if (!std::isfinite(term)) {
      std::ostringstream msg;
      msg << "non-finite CDSM term at t=" << draw.t[b] << " x0=[" << draw.x0.row(b) << "] xt=[" << draw.xt.row(b)
          << "]";
      throw NonFiniteError(msg.str());
    }
    total += term;
  }
  return total / static_cast<double>(s.rows() * s.cols());
}

double cdsm_loss(const ScoreFunction& score, const Matrix& batch, const NoiseSchedule& schedule,
                 const ReflectedKernel& kernel, Rng& rng) {
  if (batch.rows() == 0) throw std::invalid_argument("cdsm_loss: empty batch");
  const CdsmDraw draw = draw_cdsm_targets(batch, schedule, kernel, rng);
  Matrix s(batch.rows(), batch.cols());
  for (Eigen::Index b = 0; b < batch.rows(); ++b) {
    const Point row = score.evaluate(std::span<const double>(draw.xt.row(b).data(), batch.cols()), draw.t[b]);
    for (Eigen::Index k = 0; k < batch.cols(); ++k) s(b, k) = row[static_cast<std::size_t>(k)];
  }
  return cdsm_objective(s, draw);
}

double cdsm_loss_and_gradient(const ScoreNetwork& net, const CdsmDraw& draw, std::span<double> grad) {
  if (draw.x0.rows() == 0) throw std::invalid_argument("cdsm_loss_and_gradient: empty batch");
  ScoreNetwork::Cache cache;
  const Matrix s = net.forward(draw.xt, draw.sigma, &cache);
  const double loss = cdsm_objective(s, draw);
  if (!grad.empty()) {
    const double scale = 2.0 / static_cast<double>(s.rows() * s.cols());
    Matrix g = s - draw.target;
    for (Eigen::Index b = 0; b < g.rows(); ++b) g.row(b) *= scale * draw.weight[b];
    net.backward(cache, g, grad);
  }
  return loss;
}

void ema_update(std::span<double> ema, std::span<const double> params, double rate) {
  if (ema.size() != params.size()) throw std::invalid_argument("ema_update: shape mismatch");
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("ema_update: rate must lie in [0, 1]");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = rate * ema[i] + (1.0 - rate) * params[i];
}

AdamOptimizer::AdamOptimizer(std::size_t n, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

Trainer::Trainer(ScoreNetwork net, NoiseSchedule schedule, TrainConfig config, ReflectedKernel kernel)
    : net_(std::move(net)),
      schedule_(schedule),
      config_(config),
      kernel_(kernel),
      adam_(net_.parameter_count(), config.learning_rate, config.beta1, config.beta2, config.adam_eps),
      ema_(net_.parameters().begin(), net_.parameters().end()) {}

double Trainer::train_step(const Matrix& batch) {
  Rng rng(config_.seed, static_cast<std::uint64_t>(adam_.steps_taken()));
  const CdsmDraw draw = draw_cdsm_targets(batch, schedule_, kernel_, rng);
  std::vector<double> grad(net_.parameter_count(), 0.0);
  const double loss = cdsm_loss_and_gradient(net_, draw, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NonFiniteError("non-finite gradient in parameter block " + net_.block_name(i) + " at step " +
                           std::to_string(adam_.steps_taken()));
    }
  }
  adam_.step(net_.parameters(), grad);
  ema_update(ema_, net_.parameters(), config_.ema_rate);
  return loss;
}

double validation_loss(const ScoreNetwork& net, const Matrix& data, const NoiseSchedule& schedule,
                       const ReflectedKernel& kernel, std::uint64_t seed) {
  Rng rng(seed, kValidationStream);
  const CdsmDraw draw = draw_cdsm_targets(data, schedule, kernel, rng);
  return cdsm_loss_and_gradient(net, draw, {});
}

std::vector<TrainingRecord> fit(Trainer& trainer, const Matrix& data, const Matrix* validation, int val_every,
                                const std::function<bool(const TrainingRecord&)>& on_step,
                                double initial_smoothed_loss) {
  if (data.rows() == 0) throw std::invalid_argument("fit: empty dataset");
  const TrainConfig& config = trainer.config();
  const auto batch_size = static_cast<Eigen::Index>(config.batch_size);
  std::vector<TrainingRecord> records;
  double smoothed = initial_smoothed_loss;
  Matrix batch(batch_size, data.cols());
  while (trainer.step() < config.total_steps) {
    Rng pick(config.seed, static_cast<std::uint64_t>(trainer.step()) | kBatchStreamBit);
    for (Eigen::Index b = 0; b < batch_size; ++b) {
      const auto row = static_cast<Eigen::Index>(pick.next_u64() % static_cast<std::uint64_t>(data.rows()));
      batch.row(b) = data.row(row);
    }
    const double loss = trainer.train_step(batch);
    smoothed = std::isnan(smoothed) ? loss : kLossSmoothing * smoothed + (1.0 - kLossSmoothing) * loss;
    TrainingRecord rec{trainer.step(), loss, smoothed, std::numeric_limits<double>::quiet_NaN()};
    if (validation && val_every > 0 && (trainer.step() % val_every == 0 || trainer.step() == config.total_steps)) {
      rec.validation_loss =
          validation_loss(trainer.ema_network(), *validation, trainer.schedule(), trainer.kernel(), config.seed);
    }
    records.push_back(rec);
    if (on_step && !on_step(rec)) break;
  }
  return records;
}

std::vector<Point> make_simplex_dataset(int d, int n, std::span<const double> concentration, Rng& rng, double clip) {
  if (d < 2) throw std::invalid_argument("make_simplex_dataset: d must be >= 2");
  if (concentration.size() != static_cast<std::size_t>(d + 1) && concentration.size() != 1) {
    throw std::invalid_argument("make_simplex_dataset: concentration needs d + 1 entries (or one, symmetric)");
  }
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<double> g(static_cast<std::size_t>(d + 1));
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int k = 0; k <= d; ++k) {
      const double alpha = concentration.size() == 1 ? concentration[0] : concentration[static_cast<std::size_t>(k)];
      g[static_cast<std::size_t>(k)] = rng.gamma(alpha);
      total += g[static_cast<std::size_t>(k)];
    }
    // Pull every barycentric coordinate (slack included) into [clip, 1 - clip].
    Point y(static_cast<std::size_t>(d));
    const double shrink = 1.0 - (d + 1) * clip;
    for (int k = 0; k < d; ++k) y[static_cast<std::size_t>(k)] = clip + shrink * g[static_cast<std::size_t>(k)] / total;
    out.push_back(std::move(y));
  }
  return out;
}

}  // namespace refldiff
