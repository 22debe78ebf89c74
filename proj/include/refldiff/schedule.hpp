#pragma once

namespace refldiff {

// Reflected variance-exploding schedule on t in [0, 1]:
//   sigma(t) = sigma0^(1-t) sigma1^t,   gbar(t) = sigma(t) sqrt(2 log(sigma1/sigma0)),
// so gbar(t)^2 = d/dt sigma(t)^2 and the kernel variance between s and t is
// sigma(t)^2 - sigma(s)^2.
class NoiseSchedule {
 public:
  NoiseSchedule(double sigma0, double sigma1, double t_min = kDefaultTMin);

  static constexpr double kDefaultTMin = 1e-5;

  // App-default endpoints: sample quality and likelihood runs.
  static NoiseSchedule sample_quality() { return NoiseSchedule(0.01, 5.0); }
  static NoiseSchedule likelihood() { return NoiseSchedule(1e-4, 5.0); }

  double sigma0() const { return sigma0_; }
  double sigma1() const { return sigma1_; }
  double t_min() const { return t_min_; }

  double sigma(double t) const;
  double gbar(double t) const;
  double gbar_squared(double t) const;
  double accumulated_variance(double s, double t) const;
  // Variance of the forward kernel from data at time 0 to time t.
  double variance_from_data(double t) const { return accumulated_variance(0.0, t); }

 private:
  double sigma0_;
  double sigma1_;
  double t_min_;
  double log_ratio_;
};

}  // namespace refldiff
