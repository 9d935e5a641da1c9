#pragma once

#include <cstdint>
#include <random>

namespace bcm {

using Rng = std::mt19937_64;

/// Everything on the noise-level axis. Defaults other than `T` are the usual
/// EDM / consistency-training conventions and are overridable from config.
struct ScheduleConfig {
  double T = 80.0;
  double t_min = 0.002;
  double p_mean = -1.1;
  double p_std = 2.0;
  std::int64_t ramp_period = 100;  // iterations per discretization doubling
  std::int64_t n_max = 1024;       // power of two

  /// Throws InvalidInput on any violated invariant.
  void validate() const;

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Teacher-far time t and teacher-near time r, with 0 <= r < t.
struct TimePair {
  double t = 0.0;
  double r = 0.0;
};

/// exp(p_mean + p_std * z) clamped into [t_min, T].
double time_from_normal(double z, const ScheduleConfig& cfg) noexcept;

/// Draw t ~ LogNormal(p_mean, p_std), clamped into [t_min, T].
double sample_t(Rng& rng, const ScheduleConfig& cfg);

/// N(k) = min(n_max, 2^floor(k / ramp_period)).
std::int64_t discretization_count(std::int64_t k, const ScheduleConfig& cfg);

/// r = t * (1 - 1/N(k)). Zero at k < ramp_period; r/t -> 1 as k grows.
double map_r(double t, std::int64_t k, const ScheduleConfig& cfg);

/// Convenience: sample t then map it for iteration k.
TimePair sample_time_pair(Rng& rng, std::int64_t k, const ScheduleConfig& cfg);

}  // namespace bcm
