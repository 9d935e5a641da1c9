#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "bcm/image.hpp"
#include "bcm/model.hpp"
#include "bcm/schedules.hpp"
#include "bcm/triggers.hpp"

namespace bcm {

enum class Branch { clean, backdoor };
std::string_view to_string(Branch branch) noexcept;

/// Backdoor branch iff u < rho.
Branch poison_gate(double u, double rho);

struct BackdoorConfig {
  double poison_rate = 0.1;
  TriggerSpec trigger;
  TargetSpec target;

  /// Throws InvalidInput unless rho is in [0, 1] and trigger/target match `shape`.
  void validate(const ImageShape& shape) const;
};

enum class Weighting { inverse_gap, constant };
enum class Distance { pseudo_huber, squared_l2 };

std::string_view to_string(Weighting w) noexcept;
std::string_view to_string(Distance d) noexcept;
Weighting parse_weighting(std::string_view name);
Distance parse_distance(std::string_view name);

struct LossConfig {
  Weighting weighting = Weighting::inverse_gap;
  Distance distance = Distance::pseudo_huber;
  /// Pseudo-Huber offset; unset means 0.03 * sqrt(D).
  std::optional<double> huber_c;

  double huber_c_for(std::size_t elements) const;
};

/// lambda(t, r): 1/(t - r) or 1.
double loss_weight(double t, double r, Weighting weighting);

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer state over a flat parameter buffer.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t steps = 0;

  void step(std::span<float> params, std::span<const float> grads, const OptimizerConfig& cfg);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

enum class TeacherMode { stop_grad, ema };

struct TeacherConfig {
  TeacherMode mode = TeacherMode::stop_grad;
  double ema_decay = 0.999;
};

std::string_view to_string(TeacherMode mode) noexcept;
TeacherMode parse_teacher_mode(std::string_view name);

/// Everything Algorithm-1 style training mutates.
struct TrainState {
  NetworkParams student;
  NetworkParams teacher;
  std::int64_t k = 0;
  AdamState optimizer;
  TeacherConfig teacher_cfg;
  Rng gate_rng;   // poison gate draws only
  Rng noise_rng;  // t and epsilon draws
  std::size_t target_cursor = 0;

  /// Student from `init`, teacher a copy, independent gate/noise streams from `seed`.
  static TrainState create(NetworkParams init, std::uint64_t seed, TeacherConfig teacher = {});
};

struct TrainConfig {
  ScheduleConfig schedule;
  /// Unset means clean consistency training.
  std::optional<BackdoorConfig> backdoor;
  LossConfig loss;
  OptimizerConfig optimizer;
};

/// Adjacent-time pair sharing one epsilon:
///   clean:    (x0 + t eps,       x0 + r eps)
///   backdoor: (x0 + t R + t eps, x0 + r R + r eps)
/// `trigger` is null for the clean branch. Rejects r >= t unless
/// `allow_degenerate` (diagnostics only), and any shape mismatch.
std::pair<ImageTensor, ImageTensor> make_pair(const ImageTensor& x0, const ImageTensor* trigger, double t, double r,
                                              const ImageTensor& eps, bool allow_degenerate = false);

template <class S>
struct LossResult {
  S mean = 0;
  std::vector<S> per_sample;
};

/// Batch mean of lambda(t, r) d(f_student(x_t, t), f_teacher(x_r, r)).
/// Rows with r < t_min use x_r itself as the teacher output (boundary
/// condition at the data end). The teacher is never differentiated. When
/// `student_grad` is non-null the gradient of the mean is accumulated into it.
template <class S>
LossResult<S> consistency_loss(const ConsistencyFunction<S>& fn, const BasicNetworkParams<S>& student,
                               const BasicNetworkParams<S>& teacher, const nn::Batch<S>& x_t,
                               const nn::Batch<S>& x_r, std::span<const double> t, std::span<const double> r,
                               const LossConfig& cfg, std::vector<S>* student_grad = nullptr,
                               std::vector<const void*>* gradient_probe = nullptr);

/// teacher <- student (stop_grad) or decay * teacher + (1 - decay) * student (ema).
void update_teacher(TrainState& state);

/// average <- d * average + (1 - d) * student with d = min(decay, (1 + k) / (10 + k)),
/// k the number of steps taken so far.
void update_average(NetworkParams& average, const NetworkParams& student, double decay, std::int64_t k);

/// What a single train_step did, for logging and diagnostics.
struct StepReport {
  double loss_mean = 0.0;
  double clean_loss_sum = 0.0;
  std::int64_t clean_count = 0;
  double backdoor_loss_sum = 0.0;
  std::int64_t backdoor_count = 0;
  /// Parameter sets that received a gradient this step.
  std::vector<const void*> gradient_targets;
};

/// One training iteration over a batch: per element a gate draw, t ~ p(t),
/// r = map_r(t, k), epsilon ~ N(0, I), pair construction; then one optimizer
/// step on the batch-mean loss, a teacher update and k += 1.
/// Throws TrainingAbort on a non-finite loss.
class Trainer {
 public:
  Trainer(const BackboneSpec& spec, TrainConfig cfg);

  const TrainConfig& config() const noexcept { return cfg_; }
  const ConsistencyFunction<float>& function() const noexcept { return fn_; }

  StepReport step(TrainState& state, std::span<const ImageTensor> clean_batch) const;

 private:
  TrainConfig cfg_;
  ConsistencyFunction<float> fn_;
};

StepReport train_step(TrainState& state, std::span<const ImageTensor> clean_batch, const TrainConfig& cfg);

}  // namespace bcm
