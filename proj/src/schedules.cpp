#include "bcm/schedules.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "bcm/errors.hpp"

namespace bcm {

void ScheduleConfig::validate() const {
  if (!(t_min > 0.0 && t_min < T)) {
    throw InvalidInput("schedule: require 0 < t_min < T (t_min=" + std::to_string(t_min) +
                       ", T=" + std::to_string(T) + ")");
  }
  if (!(p_std > 0.0)) throw InvalidInput("schedule: p_std must be positive");
  if (ramp_period < 1) throw InvalidInput("schedule: ramp_period must be >= 1");
  if (n_max < 1 || !std::has_single_bit(static_cast<std::uint64_t>(n_max))) {
    throw InvalidInput("schedule: n_max must be a power of two >= 1");
  }
}

double time_from_normal(double z, const ScheduleConfig& cfg) noexcept {
  return std::clamp(std::exp(cfg.p_mean + cfg.p_std * z), cfg.t_min, cfg.T);
}

double sample_t(Rng& rng, const ScheduleConfig& cfg) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return time_from_normal(normal(rng), cfg);
}

std::int64_t discretization_count(std::int64_t k, const ScheduleConfig& cfg) {
  if (k < 0) throw InvalidInput("discretization_count: negative iteration count");
  const std::int64_t doublings = k / cfg.ramp_period;
  const int cap = std::countr_zero(static_cast<std::uint64_t>(cfg.n_max));
  if (doublings >= cap) return cfg.n_max;
  return std::int64_t{1} << doublings;
}

double map_r(double t, std::int64_t k, const ScheduleConfig& cfg) {
  const auto n = static_cast<double>(discretization_count(k, cfg));
  return t * (1.0 - 1.0 / n);
}

TimePair sample_time_pair(Rng& rng, std::int64_t k, const ScheduleConfig& cfg) {
  const double t = sample_t(rng, cfg);
  return {t, map_r(t, k, cfg)};
}

}  // namespace bcm
