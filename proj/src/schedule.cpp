#include "refldiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace refldiff {

namespace {
void require_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument(std::string(what) + ": t must lie in [0, 1]");
}
}  // namespace

NoiseSchedule::NoiseSchedule(double sigma0, double sigma1, double t_min)
    : sigma0_(sigma0), sigma1_(sigma1), t_min_(t_min) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("NoiseSchedule: sigma0 must be > 0");
  if (!(sigma1 > sigma0)) throw std::invalid_argument("NoiseSchedule: sigma1 must exceed sigma0");
  if (!(t_min >= 0.0 && t_min < 1.0)) throw std::invalid_argument("NoiseSchedule: t_min must lie in [0, 1)");
  log_ratio_ = std::log(sigma1 / sigma0);
}

double NoiseSchedule::sigma(double t) const {
  require_time(t, "sigma");
  return sigma0_ * std::exp(t * log_ratio_);
}

double NoiseSchedule::gbar(double t) const { return sigma(t) * std::sqrt(2.0 * log_ratio_); }

double NoiseSchedule::gbar_squared(double t) const {
  const double s = sigma(t);
  return 2.0 * log_ratio_ * s * s;
}

double NoiseSchedule::accumulated_variance(double s, double t) const {
  require_time(s, "accumulated_variance");
  require_time(t, "accumulated_variance");
  if (s > t) throw std::invalid_argument("accumulated_variance: s must not exceed t");
  // sigma(t)^2 - sigma(s)^2 = sigma(s)^2 expm1(2 (t - s) log_ratio), exact for t -> s.
  const double ss = sigma(s);
  return ss * ss * std::expm1(2.0 * (t - s) * log_ratio_);
}

}  // namespace refldiff
