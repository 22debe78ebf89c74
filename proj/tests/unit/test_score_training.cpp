#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "refldiff/checkpoint.hpp"
#include "refldiff/network.hpp"
#include "refldiff/score_function.hpp"
#include "refldiff/training.hpp"

using namespace refldiff;

namespace {

Matrix toy_batch(const ToyDistribution& toy, int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, toy.dim());
  for (int i = 0; i < n; ++i) {
    const Point p = toy.sample(rng);
    for (int k = 0; k < toy.dim(); ++k) m(i, k) = p[k];
  }
  return m;
}

TrainConfig small_config(int steps) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 16;
  c.total_steps = steps;
  c.ema_rate = 0.9;
  c.seed = 5;
  return c;
}

NetworkShape small_shape(int d) {
  NetworkShape s;
  s.input_dim = d;
  s.embed_dim = 4;
  s.hidden_width = 8;
  s.hidden_layers = 2;
  return s;
}

}  // namespace

TEST_CASE("toy score matches finite differences of its log density") {
  const auto schedule = NoiseSchedule::sample_quality();
  for (const auto& toy : {ToyDistribution::two_bump_1d(), ToyDistribution::mixture_2d()}) {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      Point x(toy.dim());
      for (auto& c : x) c = 0.02 + 0.96 * rng.uniform();
      const double t = 0.05 + 0.9 * rng.uniform();
      const Point s = exact_score(toy, x, t, schedule);
      for (int k = 0; k < toy.dim(); ++k) {
        const double h = 1e-6;
        Point xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd =
            (toy_log_density(toy, xp, t, schedule) - toy_log_density(toy, xm, t, schedule)) / (2 * h);
        CHECK(std::abs(fd - s[k]) < 1e-5 * std::max(1.0, std::abs(s[k])));
      }
    }
  }
}

TEST_CASE("toy score vanishes on the boundary") {
  const auto schedule = NoiseSchedule::sample_quality();
  const auto toy = ToyDistribution::two_bump_1d();
  for (double t : {0.1, 0.5, 1.0}) {
    CHECK(std::abs(exact_score(toy, Point{0.0}, t, schedule)[0]) < 1e-6);
    CHECK(std::abs(exact_score(toy, Point{1.0}, t, schedule)[0]) < 1e-6);
  }
}

TEST_CASE("network gradient matches finite differences") {
  ScoreNetwork net(small_shape(2), 3);
  Rng rng(2);
  Matrix x(5, 2);
  Eigen::VectorXd sigma(5);
  for (int i = 0; i < 5; ++i) x(i, 0) = rng.uniform(), x(i, 1) = rng.uniform(), sigma(i) = 0.01 + rng.uniform();
  Matrix w(5, 2);
  for (int i = 0; i < 5; ++i) w(i, 0) = rng.normal(), w(i, 1) = rng.normal();
  // loss = sum(w .* f(x))
  auto loss = [&](const ScoreNetwork& n) { return (n.forward(x, sigma).array() * w.array()).sum(); };

  ScoreNetwork::Cache cache;
  net.forward(x, sigma, &cache);
  std::vector<double> grad(net.parameter_count(), 0.0);
  net.backward(cache, w, grad);

  double worst = 0.0;
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i], h = 1e-6;
    params[i] = saved + h;
    const double up = loss(net);
    params[i] = saved - h;
    const double down = loss(net);
    params[i] = saved;
    worst = std::max(worst, std::abs((up - down) / (2 * h) - grad[i]) / std::max(1.0, std::abs(grad[i])));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("network shape validation and layout") {
  CHECK_THROWS(ScoreNetwork(NetworkShape{1, 3, 8, 2, true}, 0));
  const auto shape = small_shape(3);
  // (3 + 4) * 8 + 3 * 8, then 8 * 8 + 3 * 8, then 8 * 3 + 3
  CHECK(ScoreNetwork::parameter_count_for(shape) == (7 * 8 + 24) + (64 + 24) + (24 + 3));
  CHECK_THROWS(ScoreNetwork(shape, std::vector<double>(5, 0.0)));
  ScoreNetwork net(shape, 1);
  CHECK(net.block_name(0).find("weight") != std::string::npos);
  CHECK_THROWS(net.forward(Matrix(2, 2), Eigen::VectorXd::Ones(2)));
}

TEST_CASE("adam with zero learning rate leaves parameters unchanged") {
  std::vector<double> p = {1.0, -2.0, 3.0};
  const auto before = p;
  AdamOptimizer adam(3, 0.0);
  for (int i = 0; i < 10; ++i) adam.step(p, std::vector<double>{0.5, -1.0, 2.0});
  CHECK(p == before);
  CHECK(adam.steps_taken() == 10);
}

TEST_CASE("adam first step moves every parameter by the learning rate") {
  std::vector<double> p = {0.0, 0.0};
  AdamOptimizer adam(2, 0.01);
  adam.step(p, std::vector<double>{3.0, -0.2});
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("ema closed forms") {
  std::vector<double> ema = {0.0, 4.0};
  const std::vector<double> p = {1.0, 2.0};
  const double r = 0.9;
  for (int k = 0; k < 25; ++k) ema_update(ema, p, r);
  CHECK(ema[0] == doctest::Approx(1.0 - std::pow(r, 25)).epsilon(1e-12));
  CHECK(ema[1] == doctest::Approx(2.0 + 2.0 * std::pow(r, 25)).epsilon(1e-12));
  std::vector<double> frozen = {7.0};
  ema_update(frozen, std::vector<double>{1.0}, 1.0);
  CHECK(frozen[0] == 7.0);
  ema_update(frozen, std::vector<double>{1.0}, 0.0);
  CHECK(frozen[0] == 1.0);
  CHECK_THROWS(ema_update(frozen, std::vector<double>{1.0}, 1.5));
  CHECK_THROWS(ema_update(frozen, p, 0.5));
}

TEST_CASE("cdsm targets") {
  const auto schedule = NoiseSchedule::sample_quality();
  const ReflectedKernel kernel;
  const auto toy = ToyDistribution::mixture_2d();
  Rng rng(3);
  const auto draw = draw_cdsm_targets(toy_batch(toy, 500, 4), schedule, kernel, rng);
  for (Eigen::Index i = 0; i < draw.xt.rows(); ++i) {
    CHECK(draw.t(i) >= schedule.t_min());
    CHECK(draw.t(i) <= 1.0);
    CHECK(draw.weight(i) == doctest::Approx(schedule.gbar_squared(draw.t(i))));
    for (Eigen::Index k = 0; k < 2; ++k) {
      CHECK(draw.xt(i, k) >= 0.0);
      CHECK(draw.xt(i, k) <= 1.0);
      CHECK(std::isfinite(draw.target(i, k)));
    }
    const double v = schedule.variance_from_data(draw.t(i));
    const double x0[] = {draw.x0(i, 0), draw.x0(i, 1)}, xt[] = {draw.xt(i, 0), draw.xt(i, 1)};
    const Point s = kernel.score_nd(x0, xt, v);
    CHECK(draw.target(i, 0) == doctest::Approx(s[0]));
  }
  CHECK_THROWS(cdsm_loss(ZeroScore(2), Matrix(0, 2), schedule, kernel, rng));
}

TEST_CASE("cdsm and explicit score matching differ by a score-independent constant") {
  // On a common draw, [L_dsm(s) - L_esm(s)] - [L_dsm(0) - L_esm(0)] has per-row
  // mean 2 w s . (true - target), which is zero in expectation.
  const auto schedule = NoiseSchedule::sample_quality();
  const ReflectedKernel kernel;
  const auto toy = ToyDistribution::two_bump_1d();
  Rng rng(6);
  const int n = 20000;
  const auto draw = draw_cdsm_targets(toy_batch(toy, n, 7), schedule, kernel, rng);
  // A smooth score that is not the truth.
  auto s_of = [](double x) { return 3.0 * std::sin(2 * std::numbers::pi * x); };
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw.xt(i, 0);
    const double truth = exact_score(toy, Point{x}, draw.t(i), schedule)[0];
    const double term = 2.0 * draw.weight(i) * s_of(x) * (truth - draw.target(i, 0));
    sum += term;
    sum2 += term * term;
  }
  const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean) < 4.0 * se);
}

TEST_CASE("exact score beats perturbed scores on the cdsm objective") {
  const auto schedule = NoiseSchedule::sample_quality();
  const ReflectedKernel kernel;
  const auto toy = ToyDistribution::two_bump_1d();
  const ToyScore exact(toy, schedule);
  const Matrix batch = toy_batch(toy, 100000, 8);
  for (double c : {-0.5, 0.5}) {
    const FunctionScore shifted(1, [&](std::span<const double> x, double t) {
      Point s = exact.evaluate(x, t);
      s[0] += c;
      return s;
    });
    Rng r1(9), r2(9);
    const double l_exact = cdsm_loss(exact, batch, schedule, kernel, r1);
    const double l_shift = cdsm_loss(shifted, batch, schedule, kernel, r2);
    // Expected gap is c^2 E[gbar^2] = c^2 (sigma1^2 - sigma(t_min)^2) / (1 - t_min).
    const double expected = c * c * schedule.accumulated_variance(schedule.t_min(), 1.0) / (1 - schedule.t_min());
    CHECK(l_shift - l_exact == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("training reduces the loss and is reproducible") {
  const auto schedule = NoiseSchedule::sample_quality();
  const Matrix data = toy_batch(ToyDistribution::two_bump_1d(), 256, 10);
  auto run = [&](int steps) {
    Trainer trainer(ScoreNetwork(small_shape(1), 1), schedule, small_config(steps));
    fit(trainer, data);
    return trainer;
  };
  const Trainer a = run(20), b = run(20);
  CHECK(std::equal(a.network().parameters().begin(), a.network().parameters().end(),
                   b.network().parameters().begin()));
  CHECK(a.step() == 20);
  CHECK_THROWS(fit(*const_cast<Trainer*>(&a), Matrix(0, 1)));
}

TEST_CASE("fit reports validation on schedule and can stop early") {
  const auto schedule = NoiseSchedule::sample_quality();
  const Matrix data = toy_batch(ToyDistribution::two_bump_1d(), 128, 11);
  const Matrix val = toy_batch(ToyDistribution::two_bump_1d(), 64, 12);
  Trainer trainer(ScoreNetwork(small_shape(1), 1), schedule, small_config(12));
  int seen = 0;
  auto records = fit(trainer, data, &val, 4, [&](const TrainingRecord& r) {
    ++seen;
    if (r.step % 4 == 0) CHECK(std::isfinite(r.validation_loss));
    else CHECK(std::isnan(r.validation_loss));
    return r.step < 8;
  });
  CHECK(trainer.step() == 8);
  CHECK(records.size() == 8);
  CHECK(seen == 8);
  const double v1 = validation_loss(trainer.ema_network(), val, schedule, ReflectedKernel(), 3);
  const double v2 = validation_loss(trainer.ema_network(), val, schedule, ReflectedKernel(), 3);
  CHECK(v1 == v2);
}

TEST_CASE("checkpoint round trip and bit-identical resume") {
  const auto schedule = NoiseSchedule::sample_quality();
  const Matrix data = toy_batch(ToyDistribution::mixture_2d(), 128, 13);
  const auto dir = std::filesystem::temp_directory_path() / "refldiff_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.bin";

  Trainer straight(ScoreNetwork(small_shape(2), 2), schedule, small_config(10));
  fit(straight, data);

  Trainer first(ScoreNetwork(small_shape(2), 2), schedule, small_config(10));
  fit(first, data, nullptr, 0, [](const TrainingRecord& r) { return r.step < 5; });
  REQUIRE(first.step() == 5);
  save_checkpoint(path, snapshot(first, Domain::hypercube(2), 1.25));
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.step == 5);
  CHECK(loaded.smoothed_loss == 1.25);
  CHECK(loaded.shape == small_shape(2));
  CHECK(loaded.domain.kind() == Domain::hypercube(2).kind());
  CHECK(loaded.domain.dim() == 2);
  CHECK(loaded.schedule.sigma1() == 5.0);
  Trainer resumed = restore_trainer(loaded);
  fit(resumed, data);
  CHECK(resumed.step() == 10);
  const auto p1 = straight.network().parameters(), p2 = resumed.network().parameters();
  CHECK(std::equal(p1.begin(), p1.end(), p2.begin()));
  CHECK(straight.ema_parameters() == resumed.ema_parameters());

  // Corruption is detected.
  {
    std::ofstream(dir / "bad.bin", std::ios::binary) << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.bin"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), CheckpointError);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
    std::ofstream(dir / "long.bin", std::ios::binary) << bytes << "x";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "long.bin"), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("simplex dataset") {
  Rng rng(14);
  const std::vector<double> alpha = {2.0};
  const auto pts = make_simplex_dataset(5, 1000, alpha, rng);
  CHECK(pts.size() == 1000);
  const Domain s = Domain::simplex(5);
  double mean0 = 0.0;
  for (const auto& p : pts) {
    CHECK(p.size() == 5);
    CHECK(s.contains(p, 1e-12));
    for (double c : p) CHECK(c > 0.0);
    mean0 += p[0] / pts.size();
  }
  // Symmetric Dirichlet over 6 parts: mean 1/6.
  CHECK(std::abs(mean0 - 1.0 / 6) < 0.01);
  CHECK_THROWS(make_simplex_dataset(1, 10, alpha, rng));
  CHECK_THROWS(make_simplex_dataset(3, 10, std::vector<double>{1, 2}, rng));
}
