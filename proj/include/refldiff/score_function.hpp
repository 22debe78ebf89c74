#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "refldiff/geometry.hpp"
#include "refldiff/kernel.hpp"
#include "refldiff/schedule.hpp"

namespace refldiff {

// Batches of points are row-major: one row per chain / example.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Estimate of grad_x log p_t(x). Implementations must be safe for concurrent
// const calls.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;

  virtual int dim() const = 0;
  virtual Point evaluate(std::span<const double> x, double t) const = 0;
  // Row-wise evaluation; the default loops over evaluate().
  virtual void evaluate_batch(const Matrix& x, double t, Matrix& out) const;
};

class ZeroScore final : public ScoreFunction {
 public:
  explicit ZeroScore(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  Point evaluate(std::span<const double> x, double) const override { return Point(x.size(), 0.0); }
  void evaluate_batch(const Matrix& x, double, Matrix& out) const override { out.setZero(x.rows(), x.cols()); }

 private:
  int dim_;
};

class FunctionScore final : public ScoreFunction {
 public:
  using Fn = std::function<Point(std::span<const double>, double)>;
  FunctionScore(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  Point evaluate(std::span<const double> x, double t) const override { return fn_(x, t); }

 private:
  int dim_;
  Fn fn_;
};

struct ToyComponent {
  double weight;
  Point center;
  double base_variance;  // >= 0; 0 means a point mass at t = 0
};

// Mixture of reflected-kernel bumps on [0, 1]^d. Because the kernel is a
// semigroup, the time-t marginal is the same mixture with every component
// variance increased by the accumulated variance, so p_t and its score are
// exact.
class ToyDistribution {
 public:
  explicit ToyDistribution(std::vector<ToyComponent> components, ReflectedKernel kernel = ReflectedKernel());

  // Named datasets used by the tests and the CLI.
  static ToyDistribution two_bump_1d();
  static ToyDistribution mixture_2d();

  int dim() const { return dim_; }
  const std::vector<ToyComponent>& components() const { return components_; }
  const ReflectedKernel& kernel() const { return kernel_; }

  // Mixture with component variances base_variance + extra_variance.
  double log_density(std::span<const double> x, double extra_variance) const;
  Point score(std::span<const double> x, double extra_variance) const;

  // Exact draw from p_0.
  Point sample(Rng& rng) const;

 private:
  std::vector<ToyComponent> components_;
  ReflectedKernel kernel_;
  int dim_;
};

double toy_log_density(const ToyDistribution& toy, std::span<const double> x, double t, const NoiseSchedule& schedule);
// grad_x log p_t(x) for the toy, in closed form.
Point exact_score(const ToyDistribution& toy, std::span<const double> x, double t, const NoiseSchedule& schedule);

class ToyScore final : public ScoreFunction {
 public:
  ToyScore(ToyDistribution toy, NoiseSchedule schedule) : toy_(std::move(toy)), schedule_(schedule) {}
  int dim() const override { return toy_.dim(); }
  Point evaluate(std::span<const double> x, double t) const override { return exact_score(toy_, x, t, schedule_); }

  const ToyDistribution& toy() const { return toy_; }

 private:
  ToyDistribution toy_;
  NoiseSchedule schedule_;
};

}  // namespace refldiff
