#include "refldiff/network.hpp"

#include <cmath>
#include <stdexcept>

namespace refldiff {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMinFrequency = 0.1;
constexpr double kMaxFrequency = 10.0;

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using RowVector = Eigen::RowVectorXd;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void validate(const NetworkShape& s) {
  if (s.input_dim < 1 || s.hidden_width < 1 || s.hidden_layers < 1 || s.embed_dim < 2 || s.embed_dim % 2 != 0) {
    throw std::invalid_argument("NetworkShape: dimensions must be positive and embed_dim even");
  }
}

}  // namespace

std::size_t ScoreNetwork::parameter_count_for(const NetworkShape& s) {
  validate(s);
  const auto w = static_cast<std::size_t>(s.hidden_width);
  std::size_t in = static_cast<std::size_t>(s.input_dim + s.embed_dim);
  std::size_t total = 0;
  for (int l = 0; l < s.hidden_layers; ++l) {
    total += in * w + 3 * w;
    in = w;
  }
  return total + w * static_cast<std::size_t>(s.input_dim) + static_cast<std::size_t>(s.input_dim);
}

void ScoreNetwork::build_layout() {
  std::size_t offset = 0;
  int in = shape_.input_dim + shape_.embed_dim;
  const int w = shape_.hidden_width;
  hidden_.clear();
  for (int l = 0; l < shape_.hidden_layers; ++l) {
    LayerOffsets layer{};
    layer.in = in;
    layer.out = w;
    layer.weight = offset;
    offset += static_cast<std::size_t>(in) * w;
    layer.bias = offset;
    offset += w;
    layer.gain = offset;
    offset += w;
    layer.shift = offset;
    offset += w;
    hidden_.push_back(layer);
    in = w;
  }
  out_weight_ = offset;
  offset += static_cast<std::size_t>(w) * shape_.input_dim;
  out_bias_ = offset;
}

ScoreNetwork::ScoreNetwork(NetworkShape shape, std::uint64_t init_seed) : shape_(shape) {
  params_.assign(parameter_count_for(shape_), 0.0);
  build_layout();
  Rng rng(init_seed, 0);
  auto glorot = [&](std::size_t offset, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < static_cast<std::size_t>(fan_in) * fan_out; ++i) {
      params_[offset + i] = limit * (2.0 * rng.uniform() - 1.0);
    }
  };
  for (const auto& layer : hidden_) {
    glorot(layer.weight, layer.in, layer.out);
    for (int j = 0; j < layer.out; ++j) params_[layer.gain + j] = 1.0;
  }
  glorot(out_weight_, shape_.hidden_width, shape_.input_dim);
}

ScoreNetwork::ScoreNetwork(NetworkShape shape, std::vector<double> parameters)
    : shape_(shape), params_(std::move(parameters)) {
  if (params_.size() != parameter_count_for(shape_)) {
    throw std::invalid_argument("ScoreNetwork: parameter vector does not match the shape");
  }
  build_layout();
}

Matrix ScoreNetwork::time_embedding(const Eigen::VectorXd& sigma, int embed_dim) {
  const int half = embed_dim / 2;
  Matrix emb(sigma.size(), embed_dim);
  for (Eigen::Index r = 0; r < sigma.size(); ++r) {
    const double tau = std::log(sigma[r]);
    for (int k = 0; k < half; ++k) {
      const double frac = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
      const double freq = kMinFrequency * std::pow(kMaxFrequency / kMinFrequency, frac);
      emb(r, k) = std::sin(freq * tau);
      emb(r, half + k) = std::cos(freq * tau);
    }
  }
  return emb;
}

Matrix ScoreNetwork::forward(const Matrix& x, const Eigen::VectorXd& sigma, Cache* cache) const {
  if (x.cols() != shape_.input_dim || sigma.size() != x.rows()) {
    throw std::invalid_argument("ScoreNetwork::forward: input shape mismatch");
  }
  const Eigen::Index batch = x.rows();
  Matrix a(batch, shape_.input_dim + shape_.embed_dim);
  a.leftCols(shape_.input_dim) = x;
  a.rightCols(shape_.embed_dim) = time_embedding(sigma, shape_.embed_dim);

  if (cache) {
    cache->inputs.clear();
    cache->normalized.clear();
    cache->preactivation.clear();
    cache->inv_std.clear();
    cache->sigma = sigma;
  }

  for (const auto& layer : hidden_) {
    const ConstMatrixMap weight(params_.data() + layer.weight, layer.in, layer.out);
    const Eigen::Map<const RowVector> bias(params_.data() + layer.bias, layer.out);
    const Eigen::Map<const RowVector> gain(params_.data() + layer.gain, layer.out);
    const Eigen::Map<const RowVector> shift(params_.data() + layer.shift, layer.out);

    Matrix z = a * weight;
    z.rowwise() += bias;
    Eigen::VectorXd inv_std(batch);
    for (Eigen::Index r = 0; r < batch; ++r) {
      const double mean = z.row(r).mean();
      z.row(r).array() -= mean;
      const double var = z.row(r).squaredNorm() / layer.out;
      inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
      z.row(r) *= inv_std[r];
    }
    Matrix n = z.array().rowwise() * gain.array();
    n.rowwise() += shift;
    Matrix next = n.unaryExpr([](double v) { return v * sigmoid(v); });
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->normalized.push_back(std::move(z));
      cache->preactivation.push_back(std::move(n));
      cache->inv_std.push_back(std::move(inv_std));
    }
    a = std::move(next);
  }

  const ConstMatrixMap out_weight(params_.data() + out_weight_, shape_.hidden_width, shape_.input_dim);
  const Eigen::Map<const RowVector> out_bias(params_.data() + out_bias_, shape_.input_dim);
  Matrix out = a * out_weight;
  out.rowwise() += out_bias;
  if (shape_.scale_by_sigma) {
    for (Eigen::Index r = 0; r < batch; ++r) out.row(r) /= sigma[r];
  }
  if (cache) cache->inputs.push_back(std::move(a));
  return out;
}

void ScoreNetwork::backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("ScoreNetwork::backward: gradient size mismatch");
  if (cache.inputs.size() != hidden_.size() + 1) throw std::invalid_argument("ScoreNetwork::backward: stale cache");

  Matrix g = grad_output;
  if (shape_.scale_by_sigma) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) /= cache.sigma[r];
  }

  const Matrix& last = cache.inputs.back();
  MatrixMap d_out_weight(grad.data() + out_weight_, shape_.hidden_width, shape_.input_dim);
  Eigen::Map<RowVector> d_out_bias(grad.data() + out_bias_, shape_.input_dim);
  d_out_weight.noalias() += last.transpose() * g;
  d_out_bias += g.colwise().sum();
  const ConstMatrixMap out_weight(params_.data() + out_weight_, shape_.hidden_width, shape_.input_dim);
  Matrix d_a = g * out_weight.transpose();

  for (std::size_t l = hidden_.size(); l-- > 0;) {
    const auto& layer = hidden_[l];
    const Matrix& n = cache.preactivation[l];
    const Matrix& nhat = cache.normalized[l];
    const Eigen::VectorXd& inv_std = cache.inv_std[l];

    // Swish derivative: s(v) (1 + v (1 - s(v))).
    Matrix d_n = d_a.array() * n.unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    }).array();

    Eigen::Map<RowVector> d_gain(grad.data() + layer.gain, layer.out);
    Eigen::Map<RowVector> d_shift(grad.data() + layer.shift, layer.out);
    d_gain += (d_n.array() * nhat.array()).colwise().sum().matrix();
    d_shift += d_n.colwise().sum();

    const Eigen::Map<const RowVector> gain(params_.data() + layer.gain, layer.out);
    Matrix d_nhat = d_n.array().rowwise() * gain.array();
    Matrix d_z(d_nhat.rows(), d_nhat.cols());
    for (Eigen::Index r = 0; r < d_nhat.rows(); ++r) {
      const double mean_d = d_nhat.row(r).mean();
      const double mean_dn = d_nhat.row(r).dot(nhat.row(r)) / layer.out;
      d_z.row(r) = inv_std[r] * (d_nhat.row(r).array() - mean_d - nhat.row(r).array() * mean_dn).matrix();
    }

    MatrixMap d_weight(grad.data() + layer.weight, layer.in, layer.out);
    Eigen::Map<RowVector> d_bias(grad.data() + layer.bias, layer.out);
    d_weight.noalias() += cache.inputs[l].transpose() * d_z;
    d_bias += d_z.colwise().sum();
    if (l > 0) {
      const ConstMatrixMap weight(params_.data() + layer.weight, layer.in, layer.out);
      d_a = d_z * weight.transpose();
    }
  }
}

std::string ScoreNetwork::block_name(std::size_t i) const {
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const auto& layer = hidden_[l];
    const std::string prefix = "hidden[" + std::to_string(l) + "].";
    if (i < layer.bias) return prefix + "weight";
    if (i < layer.gain) return prefix + "bias";
    if (i < layer.shift) return prefix + "ln_gain";
    if (i < layer.shift + static_cast<std::size_t>(layer.out)) return prefix + "ln_bias";
  }
  return i < out_bias_ ? "output.weight" : "output.bias";
}

Point NetworkScore::evaluate(std::span<const double> x, double t) const {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) row(0, static_cast<Eigen::Index>(k)) = x[k];
  Matrix out;
  evaluate_batch(row, t, out);
  return Point(out.data(), out.data() + out.size());
}

void NetworkScore::evaluate_batch(const Matrix& x, double t, Matrix& out) const {
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(x.rows(), schedule_.sigma(t));
  out = net_.forward(x, sigma);
}

}  // namespace refldiff
