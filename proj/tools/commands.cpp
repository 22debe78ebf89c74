#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "refldiff/checkpoint.hpp"
#include "refldiff/eval.hpp"
#include "refldiff/inference.hpp"
#include "refldiff/kernel_checks.hpp"
#include "refldiff/samplers.hpp"
#include "refldiff/training.hpp"

namespace refldiff::cli {

namespace fs = std::filesystem;

namespace {

// Streams for data generation, disjoint from sampler/training streams.
constexpr std::uint64_t kTrainDataStream = std::uint64_t{1} << 59;
constexpr std::uint64_t kValidationDataStream = kTrainDataStream + 1;
constexpr std::uint64_t kEvalDataStream = kTrainDataStream + 2;
constexpr std::uint64_t kMetricStream = kTrainDataStream + 3;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------- datasets

struct Dataset {
  std::string name;
  Domain domain = Domain::interval();
  std::optional<ToyDistribution> toy;  // exact p_0 when available
  std::vector<double> concentration;
};

Dataset dataset_from(const Config& cfg) {
  Dataset ds;
  ds.name = cfg.get("run.dataset");
  const auto dim = static_cast<int>(cfg.get_int("data.dim"));
  if (ds.name == "1d-two-bump") {
    ds.toy = ToyDistribution::two_bump_1d();
  } else if (ds.name == "2d-mixture") {
    ds.toy = ToyDistribution::mixture_2d();
    ds.domain = Domain::hypercube(2);
  } else if (ds.name == "uniform") {
    if (dim < 1) throw ConfigError("data.dim must be >= 1");
    ds.domain = dim == 1 ? Domain::interval() : Domain::hypercube(dim);
  } else if (ds.name == "simplex-dirichlet") {
    if (dim < 2) throw ConfigError("data.dim must be >= 2 for simplex-dirichlet");
    ds.domain = Domain::simplex(dim);
    ds.concentration = cfg.get_doubles("data.concentration");
    if (ds.concentration.size() != 1 && ds.concentration.size() != static_cast<std::size_t>(dim + 1)) {
      throw ConfigError("data.concentration needs 1 or data.dim + 1 entries");
    }
  } else {
    throw ConfigError("unknown run.dataset '" + ds.name + "' (1d-two-bump, 2d-mixture, uniform, simplex-dirichlet)");
  }
  return ds;
}

// Rows in the dataset's own coordinates.
Matrix draw_points(const Dataset& ds, int n, Rng& rng) {
  const int d = ds.domain.dim();
  Matrix out(n, d);
  if (ds.name == "simplex-dirichlet") {
    const auto pts = make_simplex_dataset(d, n, ds.concentration, rng);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) out(i, k) = pts[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return out;
  }
  for (int i = 0; i < n; ++i) {
    const Point p = ds.toy ? ds.toy->sample(rng) : uniform_sample(ds.domain, rng);
    for (int k = 0; k < d; ++k) out(i, k) = p[static_cast<std::size_t>(k)];
  }
  return out;
}

Point row_point(const Matrix& m, Eigen::Index r) { return Point(m.row(r).data(), m.row(r).data() + m.cols()); }

// Simplex rows mapped to cube coordinates; other domains unchanged.
Matrix to_cube(const Dataset& ds, const Matrix& pts) {
  if (ds.domain.is_product()) return pts;
  Matrix out(pts.rows(), pts.cols());
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    const Point u = stick_break_inv(row_point(pts, r));
    for (Eigen::Index k = 0; k < pts.cols(); ++k) out(r, k) = u[static_cast<std::size_t>(k)];
  }
  return out;
}

NoiseSchedule schedule_from(const Config& cfg) {
  return NoiseSchedule(cfg.get_double("schedule.sigma0"), cfg.get_double("schedule.sigma1"),
                       cfg.get_double("schedule.t_min"));
}

ReflectedKernel kernel_from(const Config& cfg) {
  return ReflectedKernel(cfg.get_double("kernel.crossover_sigma"), static_cast<int>(cfg.get_int("kernel.image_terms")),
                         static_cast<int>(cfg.get_int("kernel.eigen_terms")));
}

Checkpoint load_or_missing(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

// A score function together with whatever it borrows from.
struct ScoreSource {
  std::unique_ptr<ScoreNetwork> net;
  std::unique_ptr<ScoreFunction> score;
  NoiseSchedule schedule = NoiseSchedule::sample_quality();
  Domain domain = Domain::interval();
};

ScoreSource score_from(const std::string& kind, const std::string& checkpoint_path, bool use_ema, const Dataset& ds,
                       const NoiseSchedule& schedule) {
  ScoreSource src;
  src.schedule = schedule;
  src.domain = ds.domain;
  if (kind == "exact") {
    if (!ds.toy) {
      if (ds.name != "uniform") throw ConfigError("no exact score for dataset '" + ds.name + "'");
      src.score = std::make_unique<ZeroScore>(ds.domain.dim());
    } else {
      src.score = std::make_unique<ToyScore>(*ds.toy, schedule);
    }
  } else if (kind == "zero") {
    src.score = std::make_unique<ZeroScore>(ds.domain.dim());
  } else if (kind == "checkpoint") {
    const Checkpoint ckpt = load_or_missing(checkpoint_path);
    if (!(ckpt.domain == ds.domain)) {
      throw ConfigError("checkpoint domain " + ckpt.domain.name() + " does not match dataset domain " +
                        ds.domain.name());
    }
    src.schedule = ckpt.schedule;
    src.net = std::make_unique<ScoreNetwork>(ckpt.shape, use_ema ? ckpt.ema_parameters : ckpt.parameters);
    src.score = std::make_unique<NetworkScore>(*src.net, src.schedule);
  } else {
    throw ConfigError("unknown score source '" + kind + "' (exact, zero, checkpoint)");
  }
  return src;
}

// W1 (1D) or sliced W1 (64 directions) between two sample sets.
double distance(const Matrix& a, const Matrix& b, std::uint64_t seed) {
  if (a.cols() == 1) return wasserstein1_1d(column(a), column(b));
  Rng rng(seed, kMetricStream);
  return sliced_w1(a, b, 64, rng);
}

double density_1d(const ToyDistribution& toy, double x) {
  const double p[1] = {x};
  return std::exp(toy.log_density(p, 0.0));
}

// Distance from samples to the dataset's exact p_0, or NaN when unknown.
double distance_to_target(const Dataset& ds, const Matrix& samples, std::uint64_t seed) {
  if (!ds.toy) return kNaN;
  if (samples.cols() == 1) {
    const TabulatedCdf cdf([&](double x) { return density_1d(*ds.toy, x); });
    return wasserstein1_1d(column(samples), cdf);
  }
  Rng rng(seed, kEvalDataStream);
  const Matrix truth = draw_points(ds, static_cast<int>(samples.rows()), rng);
  return distance(samples, truth, seed);
}

SamplerConfig sampler_from(const Config& cfg, const std::string& prefix) {
  SamplerConfig sc;
  const auto method = parse_sampler_method(cfg.get(prefix + ".method"));
  if (!method) throw ConfigError("unknown sampler method '" + cfg.get(prefix + ".method") + "'");
  sc.method = *method;
  sc.steps = static_cast<int>(cfg.get_int(prefix + ".steps"));
  sc.snr = cfg.get_double(prefix + ".snr");
  sc.gbar_scale = cfg.get_double(prefix + ".gbar_scale");
  sc.percentile = cfg.get_double(prefix + ".percentile");
  const std::string integrator = cfg.get(prefix + ".ode_integrator");
  if (integrator == "rk4") {
    sc.ode_integrator = OdeIntegrator::RK4;
  } else if (integrator == "dopri5") {
    sc.ode_integrator = OdeIntegrator::DormandPrince;
  } else {
    throw ConfigError("unknown ode_integrator '" + integrator + "' (rk4, dopri5)");
  }
  sc.seed = cfg.get_u64("run.seed");
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return sc;
}

std::string samples_csv(const Matrix& pts, const SamplerConfig& sc) {
  std::ostringstream out;
  out << "chain,seed,method,steps";
  for (Eigen::Index k = 0; k < pts.cols(); ++k) out << ",x" << k;
  out << "\n";
  for (Eigen::Index r = 0; r < pts.rows(); ++r) {
    out << r << "," << sc.seed << "," << to_string(sc.method) << "," << sc.steps;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) out << "," << num(pts(r, k));
    out << "\n";
  }
  return out.str();
}

const Config::Schema kRun = {{"run.seed", "0"}, {"run.dataset", "1d-two-bump"}};
const Config::Schema kData = {{"data.dim", "2"}, {"data.concentration", "2"}};
const Config::Schema kKernel = {
    {"kernel.crossover_sigma", "0.35"}, {"kernel.image_terms", "5"}, {"kernel.eigen_terms", "5"}};

Config::Schema schedule_schema(const std::string& sigma0) {
  return {{"schedule.sigma0", sigma0}, {"schedule.sigma1", "5"}, {"schedule.t_min", "1e-5"}};
}

Config::Schema join(std::initializer_list<Config::Schema> parts) {
  Config::Schema out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ------------------------------------------------------------ kernel-check

struct CheckRow {
  std::string name;
  double value;
  double tolerance;
  std::string status;
};

int cmd_kernel_check(const Config& cfg, const fs::path& out) {
  const ReflectedKernel kernel = kernel_from(cfg);
  Rng rng(cfg.get_u64("run.seed"));
  const int grid = static_cast<int>(cfg.get_int("check.grid"));
  const auto agreement_v = linear_grid(cfg.get_double("check.agreement_v_min"), cfg.get_double("check.agreement_v_max"),
                                       static_cast<int>(cfg.get_int("check.agreement_v_count")));
  const auto xs = linear_grid(0.0, 1.0, 10);
  const auto vs = log_grid(1e-4, 25.0, 10);

  std::vector<CheckRow> rows;
  auto add = [&](const std::string& name, double value, double tol) {
    rows.push_back({name, value, tol, value < tol ? "pass" : "fail"});
  };
  add("branch_agreement", branch_agreement_error(kernel, grid, agreement_v), cfg.get_double("check.agreement_tol"));
  add("normalization", normalization_error(kernel, xs, vs), cfg.get_double("check.norm_tol"));
  add("symmetry", symmetry_error(kernel, grid, vs), cfg.get_double("check.symmetry_tol"));
  add("neumann", neumann_error(kernel, xs, vs), cfg.get_double("check.neumann_tol"));
  add("chapman_kolmogorov", chapman_kolmogorov_error(kernel, static_cast<int>(cfg.get_int("check.ck_tuples")), rng),
      cfg.get_double("check.ck_tol"));
  add("score_finite_difference", score_fd_error(kernel, grid, vs), cfg.get_double("check.score_tol"));
  const int draws = static_cast<int>(cfg.get_int("check.sampler_draws"));
  for (double v : cfg.get_doubles("check.sampler_variances")) {
    add("sampler_w1_v" + num(v), sampler_w1(kernel, 0.3, v, draws, rng), cfg.get_double("check.sampler_tol"));
  }

  // Series truncation on the variances the suite evaluates.
  double worst_bound = 0.0;
  for (double v : vs) worst_bound = std::max(worst_bound, kernel.truncation_bound(v));
  const double agreement_tol = cfg.get_double("check.agreement_tol");
  if (worst_bound > agreement_tol) rows.push_back({"truncation_warning", worst_bound, agreement_tol, "warn"});

  std::ostringstream csv;
  csv << "check,max_discrepancy,tolerance,status\n";
  for (const auto& r : rows) csv << r.name << "," << num(r.value) << "," << num(r.tolerance) << "," << r.status << "\n";
  write_atomic(out / "kernel_check.csv", csv.str());

  for (const auto& r : rows) {
    std::cout << r.status << "  " << r.name << "  " << num(r.value) << " (tol " << num(r.tolerance) << ")\n";
  }
  for (const auto& r : rows) {
    if (r.status == "fail") {
      std::cerr << "kernel-check failed: " << r.name << "\n";
      return kCheckFailed;
    }
  }
  return kOk;
}

// ------------------------------------------------------------------- train

int cmd_train(const Config& cfg, const fs::path& out) {
  const Dataset ds = dataset_from(cfg);
  const std::uint64_t seed = cfg.get_u64("run.seed");
  const fs::path resume = cfg.get("train.resume");
  const auto val_every = static_cast<int>(cfg.get_int("train.val_every"));
  const auto checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every"));

  std::optional<Trainer> trainer;
  double smoothed = kNaN;
  if (resume != "none") {
    const Checkpoint ckpt = load_or_missing(resume);
    if (!(ckpt.domain == ds.domain)) throw ConfigError("resume checkpoint domain does not match run.dataset");
    Checkpoint adjusted = ckpt;
    adjusted.train.total_steps = static_cast<int>(cfg.get_int("train.steps"));
    trainer.emplace(restore_trainer(adjusted));
    smoothed = ckpt.smoothed_loss;
  } else {
    NetworkShape shape;
    shape.input_dim = ds.domain.dim();
    shape.embed_dim = static_cast<int>(cfg.get_int("network.embed_dim"));
    shape.hidden_width = static_cast<int>(cfg.get_int("network.hidden_width"));
    shape.hidden_layers = static_cast<int>(cfg.get_int("network.hidden_layers"));
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("train.learning_rate");
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
    tc.total_steps = static_cast<int>(cfg.get_int("train.steps"));
    tc.ema_rate = cfg.get_double("train.ema_rate");
    tc.seed = seed;
    if (tc.batch_size < 1 || tc.total_steps < 0) throw ConfigError("train.batch_size and train.steps must be positive");
    if (!(tc.ema_rate >= 0.0 && tc.ema_rate < 1.0)) throw ConfigError("train.ema_rate must lie in [0, 1)");
    trainer.emplace(ScoreNetwork(shape, seed), schedule_from(cfg), tc);
  }

  Rng train_rng(seed, kTrainDataStream);
  Rng val_rng(seed, kValidationDataStream);
  const Matrix data = to_cube(ds, draw_points(ds, static_cast<int>(cfg.get_int("data.n_train")), train_rng));
  const Matrix validation = to_cube(ds, draw_points(ds, static_cast<int>(cfg.get_int("data.n_validation")), val_rng));

  const fs::path ckpt_path = out / "checkpoint.bin";
  std::ostringstream curve;
  curve << "step,loss,smoothed_loss,validation_loss\n";
  if (trainer->step() == 0 && val_every > 0) {
    curve << 0 << ",nan,nan,"
          << num(validation_loss(trainer->ema_network(), validation, trainer->schedule(), trainer->kernel(), seed))
          << "\n";
  }
  int exit_code = kOk;
  try {
    fit(*trainer, data, &validation, val_every, [&](const TrainingRecord& rec) {
      curve << rec.step << "," << num(rec.loss) << "," << num(rec.smoothed_loss) << "," << num(rec.validation_loss)
            << "\n";
      smoothed = rec.smoothed_loss;
      if (checkpoint_every > 0 && rec.step % checkpoint_every == 0) {
        save_checkpoint(ckpt_path, snapshot(*trainer, ds.domain, smoothed));
      }
      return true;
    }, smoothed);
  } catch (const NonFiniteError& e) {
    // Parameters are untouched by the failing step; keep the last finite state.
    std::cerr << "training aborted: " << e.what() << "\n";
    exit_code = kCheckFailed;
  }
  save_checkpoint(ckpt_path, snapshot(*trainer, ds.domain, smoothed));
  write_atomic(out / "loss_curve.csv", curve.str());
  std::cout << "trained to step " << trainer->step() << ", smoothed loss " << num(smoothed) << "\n";
  return exit_code;
}

// ------------------------------------------------------------------ sample

int cmd_sample(const Config& cfg, const fs::path& out) {
  const Dataset ds = dataset_from(cfg);
  const SamplerConfig sc = sampler_from(cfg, "sampler");
  const ScoreSource src = score_from(cfg.get("sampler.score"), cfg.get("sampler.checkpoint"),
                                     cfg.get_bool("sampler.use_ema"), ds, schedule_from(cfg));
  const auto n = static_cast<std::size_t>(cfg.get_int("sampler.n"));
  const SampleBatch batch = generate(*src.score, src.domain, src.schedule, sc, n);

  write_atomic(out / "samples.csv", samples_csv(batch.points, sc));
  const double w1 = distance_to_target(ds, batch.points, sc.seed);
  std::ostringstream summary;
  summary << "method,steps,n,ode_exits,corrector_caps,score_evaluations,w1_to_target\n"
          << to_string(sc.method) << "," << sc.steps << "," << n << "," << batch.diagnostics.ode_exits << ","
          << batch.diagnostics.corrector_caps << "," << batch.diagnostics.score_evaluations << "," << num(w1) << "\n";
  write_atomic(out / "sample_summary.csv", summary.str());
  std::cout << to_string(sc.method) << ": " << n << " samples, W1 to target " << num(w1) << ", ODE exits "
            << batch.diagnostics.ode_exits << "\n";
  return kOk;
}

// ---------------------------------------------------- compare-thresholding

int cmd_compare_thresholding(const Config& cfg, const fs::path& out) {
  const Dataset ds = dataset_from(cfg);
  if (!ds.toy) throw ConfigError("compare-thresholding needs a toy dataset with an exact score");
  const NoiseSchedule schedule = schedule_from(cfg);
  const ToyScore score(*ds.toy, schedule);
  const std::uint64_t seed = cfg.get_u64("run.seed");
  const auto n = static_cast<std::size_t>(cfg.get_int("thresh.n"));

  SamplerConfig ref;
  ref.method = SamplerMethod::ReflectEM;
  ref.steps = static_cast<int>(cfg.get_int("thresh.reference_steps"));
  ref.seed = seed;
  const Matrix reference = generate(score, ds.domain, schedule, ref, n).points;
  ref.seed = seed + 1;
  const Matrix reference2 = generate(score, ds.domain, schedule, ref, n).points;

  std::ostringstream csv;
  csv << "method,steps,w1_to_reference\n";
  csv << "reference," << ref.steps << "," << num(distance(reference, reference2, seed)) << "\n";
  for (const auto& name : cfg.get_strings("thresh.methods")) {
    const auto method = parse_sampler_method(name);
    if (!method) throw ConfigError("unknown method '" + name + "' in thresh.methods");
    for (long long steps : cfg.get_ints("thresh.steps")) {
      SamplerConfig sc;
      sc.method = *method;
      sc.steps = static_cast<int>(steps);
      sc.percentile = cfg.get_double("thresh.percentile");
      sc.seed = seed + 2;
      const Matrix pts = generate(score, ds.domain, schedule, sc, n).points;
      const double w1 = distance(pts, reference, seed);
      csv << name << "," << steps << "," << num(w1) << "\n";
      std::cout << name << " steps=" << steps << " W1=" << num(w1) << "\n";
    }
  }
  write_atomic(out / "thresholding.csv", csv.str());
  return kOk;
}

// -------------------------------------------------------------------- elbo

int cmd_elbo(const Config& cfg, const fs::path& out) {
  const Dataset ds = dataset_from(cfg);
  const int n_mc = static_cast<int>(cfg.get_int("elbo.n_mc"));
  if (n_mc < kMinElboSamples) {
    throw ConfigError("elbo.n_mc must be at least " + std::to_string(kMinElboSamples) + " (got " +
                      std::to_string(n_mc) + ")");
  }
  const ScoreSource src =
      score_from(cfg.get("elbo.score"), cfg.get("elbo.checkpoint"), true, ds, schedule_from(cfg));
  const std::uint64_t seed = cfg.get_u64("run.seed");
  const int n_points = static_cast<int>(cfg.get_int("elbo.n_points"));
  Rng data_rng(seed, kEvalDataStream);
  const Matrix pts = draw_points(ds, n_points, data_rng);
  const Matrix cube = to_cube(ds, pts);
  const ReflectedKernel kernel = kernel_from(cfg);
  const int d = ds.domain.dim();

  std::ostringstream csv;
  csv << "index,total_nats,score_term,prior_term,reconstruction_term,logdet_correction,bpd,std_error\n";
  double sum_total = 0.0, sum_total2 = 0.0, sum_bpd = 0.0, sum_bpd2 = 0.0, sum_nll = 0.0;
  for (int i = 0; i < n_points; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    const Point u = row_point(cube, i);
    ElboReport r = elbo_pointwise(u, *src.score, src.schedule, kernel, n_mc, rng);
    const double correction = ds.domain.is_product() ? 0.0 : -stick_break_logdet(u);
    r.bpd = bpd(r, d, correction);
    csv << i << "," << num(r.total_nats) << "," << num(r.score_term) << "," << num(r.prior_term) << ","
        << num(r.reconstruction_term) << "," << num(correction) << "," << num(r.bpd) << "," << num(r.mc_std_error)
        << "\n";
    sum_total += r.total_nats;
    sum_total2 += r.total_nats * r.total_nats;
    sum_bpd += r.bpd;
    sum_bpd2 += r.bpd * r.bpd;
    if (ds.toy) sum_nll -= ds.toy->log_density(row_point(pts, i), 0.0);
  }
  const double n = n_points;
  auto stderr_of = [n](double s, double s2) {
    return n > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / n) / (n - 1)) / n) : 0.0;
  };
  const double mean_total = sum_total / n;
  const double mean_bpd = sum_bpd / n;
  std::ostringstream summary;
  summary << "n,mean_total_nats,stderr_total_nats,mean_bpd,stderr_bpd,mean_neg_log_p0\n"
          << n_points << "," << num(mean_total) << "," << num(stderr_of(sum_total, sum_total2)) << ","
          << num(mean_bpd) << "," << num(stderr_of(sum_bpd, sum_bpd2)) << "," << num(ds.toy ? sum_nll / n : kNaN)
          << "\n";
  write_atomic(out / "elbo.csv", csv.str());
  write_atomic(out / "elbo_summary.csv", summary.str());
  std::cout << "mean ELBO " << num(mean_total) << " nats (" << num(mean_bpd) << " bpd)";
  if (ds.toy) std::cout << ", mean -log p0 " << num(sum_nll / n);
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------- guidance-demo

int cmd_guidance_demo(const Config& cfg, const fs::path& out) {
  const NoiseSchedule schedule = schedule_from(cfg);
  const LabelledToy toy = LabelledToy::two_class_1d();
  const auto c = static_cast<std::size_t>(cfg.get_int("guide.class"));
  if (c >= toy.n_classes()) throw ConfigError("guide.class out of range");
  const std::string mode = cfg.get("guide.mode");
  if (mode != "cfg" && mode != "classifier") throw ConfigError("guide.mode must be cfg or classifier");
  const ToyScore cond(toy.conditional(c), schedule);
  const ToyScore uncond(toy.unconditional(), schedule);
  const auto classifier_grad = [&](std::span<const double> x, double t) {
    return toy.class_posterior_gradient(c, x, schedule.variance_from_data(t));
  };
  const auto n = static_cast<std::size_t>(cfg.get_int("guide.n"));
  const std::uint64_t seed = cfg.get_u64("run.seed");

  const TabulatedCdf conditional_cdf([&](double x) { return density_1d(toy.conditional(c), x); });
  std::ostringstream summary;
  summary << "w,method,mode,w1_to_tilted,w1_to_conditional\n";
  for (double w : cfg.get_doubles("guide.weights")) {
    // Target for weight w: q(x | c) q(c | x)^w.
    const TabulatedCdf tilted([&](double x) {
      const double p[1] = {x};
      return std::exp(toy.conditional(c).log_density(p, 0.0) + w * toy.log_class_posterior(c, p, 0.0));
    });
    std::unique_ptr<ScoreFunction> guided;
    if (mode == "cfg") {
      guided = std::make_unique<ClassifierFreeScore>(cond, uncond, w);
    } else {
      guided = std::make_unique<ClassifierGuidedScore>(cond, classifier_grad, w);
    }
    for (const auto& name : cfg.get_strings("guide.methods")) {
      const auto method = parse_sampler_method(name);
      if (!method) throw ConfigError("unknown method '" + name + "' in guide.methods");
      SamplerConfig sc;
      sc.method = *method;
      sc.steps = static_cast<int>(cfg.get_int("guide.steps"));
      sc.seed = seed;
      const Matrix pts = generate(*guided, Domain::interval(), schedule, sc, n).points;
      const auto xs = column(pts);
      const double to_tilted = wasserstein1_1d(xs, tilted);
      const double to_cond = wasserstein1_1d(xs, conditional_cdf);
      write_atomic(out / ("guidance_w" + num(w) + "_" + name + ".csv"), samples_csv(pts, sc));
      summary << num(w) << "," << name << "," << mode << "," << num(to_tilted) << "," << num(to_cond) << "\n";
      std::cout << "w=" << num(w) << " " << name << ": W1 to tilted " << num(to_tilted) << "\n";
    }
  }
  write_atomic(out / "guidance_summary.csv", summary.str());
  return kOk;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"kernel-check", "train", "sample", "compare-thresholding", "elbo",
                                                 "guidance-demo"};
  return names;
}

std::string command_description(const std::string& command) {
  static const std::map<std::string, std::string> text = {
      {"kernel-check", "Run the reflected-kernel property suite"},
      {"train", "Train a score network on a named dataset"},
      {"sample", "Generate samples with a reverse-time sampler"},
      {"compare-thresholding", "Convergence of thresholded and reflected samplers"},
      {"elbo", "Per-point likelihood bounds"},
      {"guidance-demo", "Guided sampling on a two-class toy"},
  };
  return text.at(command);
}

Config::Schema schema_for(const std::string& command) {
  const Config::Schema sampler = {
      {"sampler.method", "reflect-em"}, {"sampler.steps", "1000"},     {"sampler.snr", "0.03"},
      {"sampler.gbar_scale", "1"},      {"sampler.percentile", "1"},   {"sampler.ode_integrator", "rk4"},
      {"sampler.n", "10000"},           {"sampler.score", "exact"},    {"sampler.checkpoint", "checkpoint.bin"},
      {"sampler.use_ema", "true"}};
  if (command == "kernel-check") {
    return join({{{"run.seed", "0"}},
                 kKernel,
                 {{"check.grid", "20"},
                  {"check.agreement_v_min", "0.11"},
                  {"check.agreement_v_max", "0.49"},
                  {"check.agreement_v_count", "5"},
                  {"check.agreement_tol", "1e-8"},
                  {"check.norm_tol", "1e-6"},
                  {"check.symmetry_tol", "1e-12"},
                  {"check.neumann_tol", "1e-4"},
                  {"check.ck_tuples", "50"},
                  {"check.ck_tol", "1e-5"},
                  {"check.score_tol", "1e-5"},
                  {"check.sampler_draws", "100000"},
                  {"check.sampler_variances", "0.01,0.25,4"},
                  {"check.sampler_tol", "0.005"}}});
  }
  if (command == "train") {
    return join({kRun, kData, schedule_schema("0.01"),
                 {{"data.n_train", "10000"},
                  {"data.n_validation", "1000"},
                  {"network.embed_dim", "32"},
                  {"network.hidden_width", "128"},
                  {"network.hidden_layers", "4"},
                  {"train.learning_rate", "2e-4"},
                  {"train.batch_size", "128"},
                  {"train.steps", "2000"},
                  {"train.ema_rate", "0.9999"},
                  {"train.val_every", "100"},
                  {"train.checkpoint_every", "500"},
                  {"train.resume", "none"}}});
  }
  if (command == "sample") return join({kRun, kData, schedule_schema("0.01"), sampler});
  if (command == "compare-thresholding") {
    return join({kRun, kData, schedule_schema("0.01"),
                 {{"thresh.steps", "50,100,200,400,800"},
                  {"thresh.reference_steps", "3200"},
                  {"thresh.n", "10000"},
                  {"thresh.percentile", "1"},
                  {"thresh.methods", "threshold-static,threshold-dynamic,project-em,reflect-em"}}});
  }
  if (command == "elbo") {
    return join({kRun, kData, kKernel, schedule_schema("1e-4"),
                 {{"elbo.n_points", "1000"},
                  {"elbo.n_mc", "64"},
                  {"elbo.score", "exact"},
                  {"elbo.checkpoint", "checkpoint.bin"}}});
  }
  if (command == "guidance-demo") {
    return join({{{"run.seed", "0"}},
                 schedule_schema("0.01"),
                 {{"guide.weights", "0,1,4"},
                  {"guide.methods", "reflect-em,ode"},
                  {"guide.mode", "cfg"},
                  {"guide.class", "1"},
                  {"guide.n", "10000"},
                  {"guide.steps", "1000"}}});
  }
  throw ConfigError("unknown command '" + command + "'");
}

int run_command(const std::string& command, const Config& config, const fs::path& out_dir) {
  if (command == "kernel-check") return cmd_kernel_check(config, out_dir);
  if (command == "train") return cmd_train(config, out_dir);
  if (command == "sample") return cmd_sample(config, out_dir);
  if (command == "compare-thresholding") return cmd_compare_thresholding(config, out_dir);
  if (command == "elbo") return cmd_elbo(config, out_dir);
  if (command == "guidance-demo") return cmd_guidance_demo(config, out_dir);
  throw ConfigError("unknown command '" + command + "'");
}

void write_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace refldiff::cli
