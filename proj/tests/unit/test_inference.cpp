#include <doctest.h>

#include <cmath>
#include <numbers>

#include "refldiff/inference.hpp"

using namespace refldiff;

namespace {

struct Mean {
  double sum = 0, sum2 = 0;
  int n = 0;
  void add(double x) { sum += x, sum2 += x * x, ++n; }
  double mean() const { return sum / n; }
  double se() const { return std::sqrt(std::max(0.0, sum2 / n - mean() * mean()) / n); }
};

}  // namespace

TEST_CASE("uniform data with a zero score has zero nats") {
  const auto schedule = NoiseSchedule::likelihood();
  const ReflectedKernel kernel;
  Rng rng(1);
  for (int d : {1, 16}) {
    Point x(d);
    for (auto& c : x) c = rng.uniform();
    const auto r = elbo_pointwise(x, ZeroScore(d), schedule, kernel, 16, rng);
    CHECK(r.score_term == 0.0);
    CHECK(std::abs(r.total_nats) < 1e-12);
    CHECK(std::abs(r.bpd) < 1e-12);
    CHECK(r.prior_term >= 0.0);
    CHECK(r.prior_term < 1e-8);
  }
}

TEST_CASE("bits per dimension") {
  ElboReport r;
  r.total_nats = 1.0;
  CHECK(bpd(r, 1) == doctest::Approx(1.0 / std::numbers::ln2));
  r.total_nats = 4.0 * std::numbers::ln2;
  CHECK(bpd(r, 2) == doctest::Approx(2.0));
  CHECK(bpd(r, 2, 2.0 * std::numbers::ln2) == doctest::Approx(1.0));
  CHECK_THROWS(bpd(r, 0));
}

TEST_CASE("elbo argument checks") {
  const auto schedule = NoiseSchedule::likelihood();
  const ReflectedKernel kernel;
  Rng rng(2);
  CHECK_THROWS(elbo_pointwise(Point{0.5}, ZeroScore(1), schedule, kernel, 8, rng));
  CHECK_THROWS(elbo_pointwise(Point{1.5}, ZeroScore(1), schedule, kernel, 16, rng));
  CHECK_THROWS(elbo_pointwise(Point{0.5, 0.5}, ZeroScore(1), schedule, kernel, 16, rng));
  CHECK_THROWS(prior_kl_1d(0.5, 1.0, kernel, 12));
}

TEST_CASE("prior kl against the leading eigen term") {
  // p = 1 + a cos(pi x) cos(pi y) with a small: KL ~ a^2 cos^2(pi x) / 4.
  const ReflectedKernel kernel;
  const double v = 1.0, x = 0.1;
  const double a = 2.0 * std::exp(-std::numbers::pi * std::numbers::pi * v / 2.0);
  const double c = std::cos(std::numbers::pi * x);
  CHECK(prior_kl_1d(x, v, kernel) == doctest::Approx(a * a * c * c / 4.0).epsilon(1e-3));
  CHECK(prior_kl_1d(x, 25.0, kernel) < 1e-50);
}

TEST_CASE("reconstruction term: monte carlo matches the entropy shortcut") {
  const auto schedule = NoiseSchedule::likelihood();
  const ReflectedKernel kernel;
  Rng rng(3);
  for (double x : {0.0, 0.3, 0.97}) {
    const auto mc = reconstruction_term_mc(Point{x}, schedule, kernel, 20000, rng);
    const double exact = -prior_kl_1d(x, schedule.variance_from_data(1.0), kernel);
    CHECK(std::abs(mc.mean - exact) < 4.0 * mc.std_error + 1e-3);
  }
  CHECK_THROWS(reconstruction_term_mc(Point{0.5}, schedule, kernel, 4, rng));
}

TEST_CASE("elbo of the exact score bounds the negative log density") {
  const auto schedule = NoiseSchedule::likelihood();
  const ReflectedKernel kernel;
  const auto toy = ToyDistribution::two_bump_1d();
  const ToyScore exact(toy, schedule);
  const ZeroScore zero(1);
  Rng rng(4);
  Mean gap_exact, gap_zero;
  for (int i = 0; i < 400; ++i) {
    const Point x = toy.sample(rng);
    const double nll = -toy.log_density(x, 0.0);
    Rng a(5, i), b(5, i);
    gap_exact.add(elbo_pointwise(x, exact, schedule, kernel, 64, a).total_nats - nll);
    gap_zero.add(elbo_pointwise(x, zero, schedule, kernel, 64, b).total_nats - nll);
  }
  // Upper bound, tight for the true score; a worse score gives a looser bound.
  CHECK(gap_exact.mean() > -4.0 * gap_exact.se());
  CHECK(gap_exact.mean() < 0.05);
  CHECK(gap_zero.mean() > gap_exact.mean() + 0.5);
}

TEST_CASE("guidance compositions") {
  const Point c{1.0, -2.0}, u{0.5, 3.0};
  CHECK(compose_cfg(c, u, 0.0) == c);
  const Point one = compose_cfg(c, u, 1.0);
  CHECK(one[0] == doctest::Approx(1.5));
  CHECK(one[1] == doctest::Approx(-7.0));
  // Linear in w.
  const Point a = compose_cfg(c, u, 2.0), b = compose_cfg(c, u, 4.0), m = compose_cfg(c, u, 3.0);
  for (int k = 0; k < 2; ++k) CHECK(m[k] == doctest::Approx(0.5 * (a[k] + b[k])));
  CHECK(compose_classifier(c, u, 0.0) == c);
  CHECK(compose_classifier(c, u, 2.0) == Point{2.0, 4.0});
  CHECK_THROWS(compose_cfg(c, Point{1.0}, 1.0));
  CHECK_THROWS(compose_classifier(c, Point{1.0}, 1.0));
}

TEST_CASE("classifier-free guidance equals classifier guidance on the conditional") {
  const auto schedule = NoiseSchedule::sample_quality();
  const auto labelled = LabelledToy::two_class_1d();
  const ToyScore cond(labelled.conditional(1), schedule), uncond(labelled.unconditional(), schedule);
  for (double w : {0.0, 1.0, 4.0}) {
    const ClassifierFreeScore cfg(cond, uncond, w);
    const ClassifierGuidedScore guided(
        cond,
        [&](std::span<const double> x, double t) {
          return labelled.class_posterior_gradient(1, x, schedule.variance_from_data(t));
        },
        w);
    for (double x : {0.0, 0.1, 0.45, 0.8, 1.0}) {
      for (double t : {0.05, 0.3, 0.9}) {
        const double a = cfg.evaluate(Point{x}, t)[0], b = guided.evaluate(Point{x}, t)[0];
        CHECK(a == doctest::Approx(b).epsilon(1e-9).scale(1.0));
        if (x == 0.0 || x == 1.0) CHECK(std::abs(a) < 1e-5 * (1 + w));
      }
    }
  }
}

TEST_CASE("guided score is the gradient of the tilted log density") {
  const auto schedule = NoiseSchedule::sample_quality();
  const auto labelled = LabelledToy::two_class_1d();
  const ToyScore cond(labelled.conditional(1), schedule), uncond(labelled.unconditional(), schedule);
  for (double w : {1.0, 4.0}) {
    const ClassifierFreeScore cfg(cond, uncond, w);
    for (double t : {0.1, 0.5}) {
      const double v = schedule.variance_from_data(t);
      auto tilted = [&](double x) {
        return labelled.conditional(1).log_density(Point{x}, v) + w * labelled.log_class_posterior(1, Point{x}, v);
      };
      for (double x : {0.1, 0.4, 0.6, 0.9}) {
        const double h = 1e-6;
        const double fd = (tilted(x + h) - tilted(x - h)) / (2 * h);
        CHECK(std::abs(fd - cfg.evaluate(Point{x}, t)[0]) < 1e-5 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("class posteriors sum to one") {
  const auto labelled = LabelledToy::two_class_1d();
  for (double x : {0.0, 0.3, 0.5, 0.9}) {
    for (double v : {0.0, 0.01, 1.0}) {
      const double p0 = std::exp(labelled.log_class_posterior(0, Point{x}, v));
      const double p1 = std::exp(labelled.log_class_posterior(1, Point{x}, v));
      CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(labelled.n_classes() == 2);
  CHECK_THROWS(LabelledToy({}, {}));
  CHECK_THROWS(LabelledToy({ToyDistribution::two_bump_1d()}, {0.5, 0.5}));
}
