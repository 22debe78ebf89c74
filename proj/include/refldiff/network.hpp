#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "refldiff/score_function.hpp"

namespace refldiff {

struct NetworkShape {
  int input_dim = 1;
  int embed_dim = 32;  // sinusoidal features of log sigma_t; must be even
  int hidden_width = 128;
  int hidden_layers = 4;
  bool scale_by_sigma = true;  // output = raw / sigma_t

  bool operator==(const NetworkShape&) const = default;
};

// Feed-forward score model: [x, embed(log sigma)] -> (Linear -> LayerNorm ->
// Swish) x hidden_layers -> Linear, with hand-written backpropagation.
//
// Parameters live in one flat vector, in declaration order:
//   for each hidden layer: weight (in x width, row-major), bias, ln_gain, ln_bias
//   output weight (width x input_dim, row-major), output bias
class ScoreNetwork {
 public:
  struct Cache {
    std::vector<Matrix> inputs;      // input to each hidden layer, then to the output layer
    std::vector<Matrix> normalized;  // LayerNorm output before gain/bias
    std::vector<Matrix> preactivation;
    std::vector<Eigen::VectorXd> inv_std;
    Eigen::VectorXd sigma;
  };

  ScoreNetwork(NetworkShape shape, std::uint64_t init_seed);
  // Shape plus an explicit parameter vector (checkpoint loading).
  ScoreNetwork(NetworkShape shape, std::vector<double> parameters);

  const NetworkShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  // sigma holds sigma_t per row.
  Matrix forward(const Matrix& x, const Eigen::VectorXd& sigma, Cache* cache = nullptr) const;
  // Accumulates d loss / d params into grad (size parameter_count()).
  void backward(const Cache& cache, const Matrix& grad_output, std::span<double> grad) const;

  static Matrix time_embedding(const Eigen::VectorXd& sigma, int embed_dim);
  static std::size_t parameter_count_for(const NetworkShape& shape);

  // Human-readable name of the parameter block containing index i.
  std::string block_name(std::size_t i) const;

 private:
  struct LayerOffsets {
    std::size_t weight, bias, gain, shift;
    int in, out;
  };
  void build_layout();

  NetworkShape shape_;
  std::vector<double> params_;
  std::vector<LayerOffsets> hidden_;
  std::size_t out_weight_ = 0;
  std::size_t out_bias_ = 0;
};

// Adapter exposing a network as a ScoreFunction for the samplers.
class NetworkScore final : public ScoreFunction {
 public:
  NetworkScore(const ScoreNetwork& net, NoiseSchedule schedule) : net_(net), schedule_(schedule) {}
  int dim() const override { return net_.shape().input_dim; }
  Point evaluate(std::span<const double> x, double t) const override;
  void evaluate_batch(const Matrix& x, double t, Matrix& out) const override;

 private:
  const ScoreNetwork& net_;
  NoiseSchedule schedule_;
};

}  // namespace refldiff
