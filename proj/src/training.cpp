#include "bcm/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

#include "bcm/errors.hpp"

namespace bcm {

std::string_view to_string(Branch branch) noexcept { return branch == Branch::clean ? "clean" : "backdoor"; }

Branch poison_gate(double u, double rho) {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput("poison_gate: u must lie in [0, 1]");
  return u < rho ? Branch::backdoor : Branch::clean;
}

void BackdoorConfig::validate(const ImageShape& shape) const {
  if (!(poison_rate >= 0.0 && poison_rate <= 1.0)) {
    throw InvalidInput("backdoor: poison rate must lie in [0, 1], got " + std::to_string(poison_rate));
  }
  require_same_shape(trigger.shape(), shape, "backdoor trigger");
  require_same_shape(target.image.shape(), shape, "backdoor target");
  if (!target.image.within_unit_range()) throw InvalidInput("backdoor target has pixels outside [-1, 1]");
}

std::string_view to_string(Weighting w) noexcept { return w == Weighting::inverse_gap ? "inverse_gap" : "constant"; }
std::string_view to_string(Distance d) noexcept { return d == Distance::pseudo_huber ? "pseudo_huber" : "squared_l2"; }
std::string_view to_string(TeacherMode m) noexcept { return m == TeacherMode::stop_grad ? "stop_grad" : "ema"; }

Weighting parse_weighting(std::string_view name) {
  if (name == "inverse_gap") return Weighting::inverse_gap;
  if (name == "constant") return Weighting::constant;
  throw InvalidInput("unknown weighting '" + std::string(name) + "'");
}

Distance parse_distance(std::string_view name) {
  if (name == "pseudo_huber") return Distance::pseudo_huber;
  if (name == "squared_l2") return Distance::squared_l2;
  throw InvalidInput("unknown distance '" + std::string(name) + "'");
}

TeacherMode parse_teacher_mode(std::string_view name) {
  if (name == "stop_grad") return TeacherMode::stop_grad;
  if (name == "ema") return TeacherMode::ema;
  throw InvalidInput("unknown teacher mode '" + std::string(name) + "'");
}

double LossConfig::huber_c_for(std::size_t elements) const {
  const double c = huber_c.value_or(0.03 * std::sqrt(static_cast<double>(elements)));
  if (!(c > 0.0)) throw InvalidInput("loss: huber_c must be positive");
  return c;
}

double loss_weight(double t, double r, Weighting weighting) {
  return weighting == Weighting::inverse_gap ? 1.0 / (t - r) : 1.0;
}

void AdamState::step(std::span<float> params, std::span<const float> grads, const OptimizerConfig& cfg) {
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0f);
    v.assign(params.size(), 0.0f);
  }
  ++steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto step_size = static_cast<float>(cfg.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
  }
}

TrainState TrainState::create(NetworkParams init, std::uint64_t seed, TeacherConfig teacher) {
  init.validate();
  TrainState state;
  state.teacher = init;
  state.student = std::move(init);
  state.teacher_cfg = teacher;
  std::seed_seq gate_seq{seed, std::uint64_t{0x6a7e}};
  std::seed_seq noise_seq{seed, std::uint64_t{0x4e01}};
  state.gate_rng.seed(gate_seq);
  state.noise_rng.seed(noise_seq);
  return state;
}

std::pair<ImageTensor, ImageTensor> make_pair(const ImageTensor& x0, const ImageTensor* trigger, double t, double r,
                                              const ImageTensor& eps, bool allow_degenerate) {
  require_same_shape(x0.shape(), eps.shape(), "make_pair(x0, eps)");
  if (trigger) require_same_shape(x0.shape(), trigger->shape(), "make_pair(x0, R)");
  if (allow_degenerate ? r > t : r >= t) {
    throw InvalidInput("make_pair: need r < t, got t=" + std::to_string(t) + " r=" + std::to_string(r));
  }
  ImageTensor x_t(x0.shape());
  ImageTensor x_r(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double shift = (trigger ? static_cast<double>((*trigger)[i]) : 0.0) + eps[i];
    x_t[i] = static_cast<float>(x0[i] + t * shift);
    x_r[i] = static_cast<float>(x0[i] + r * shift);
#ifndef NDEBUG
    const double gap = static_cast<double>(x_t[i]) - x_r[i];
    assert(std::abs(gap - (t - r) * shift) <= 1e-5 * (std::abs(x0[i]) + t * std::abs(shift) + 1.0));
#endif
  }
  return {std::move(x_t), std::move(x_r)};
}

template <class S>
LossResult<S> consistency_loss(const ConsistencyFunction<S>& fn, const BasicNetworkParams<S>& student,
                               const BasicNetworkParams<S>& teacher, const nn::Batch<S>& x_t,
                               const nn::Batch<S>& x_r, std::span<const double> t, std::span<const double> r,
                               const LossConfig& cfg, std::vector<S>* student_grad,
                               std::vector<const void*>* gradient_probe) {
  const auto n = x_t.rows();
  if (x_r.rows() != n || x_r.cols() != x_t.cols() || t.size() != static_cast<std::size_t>(n) ||
      r.size() != static_cast<std::size_t>(n)) {
    throw InvalidInput("consistency_loss: batch size mismatch");
  }
  if (n == 0) throw EmptyInput("consistency_loss: empty batch");

  ConsistencyTape<S> tape;
  const nn::Batch<S> a = fn.forward(student, x_t, t, student_grad ? &tape : nullptr);

  // Teacher: gradient-free forward for rows past the data end, identity otherwise.
  nn::Batch<S> b = x_r;
  std::vector<Eigen::Index> rows;
  std::vector<double> teacher_times;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r[static_cast<std::size_t>(i)] >= fn.t_min()) {
      rows.push_back(i);
      teacher_times.push_back(r[static_cast<std::size_t>(i)]);
    }
  }
  if (!rows.empty()) {
    nn::Batch<S> sub(static_cast<Eigen::Index>(rows.size()), x_r.cols());
    for (std::size_t j = 0; j < rows.size(); ++j) sub.row(static_cast<Eigen::Index>(j)) = x_r.row(rows[j]);
    const nn::Batch<S> out = fn.forward(teacher, sub, teacher_times);
    for (std::size_t j = 0; j < rows.size(); ++j) b.row(rows[j]) = out.row(static_cast<Eigen::Index>(j));
  }

  const auto elements = static_cast<std::size_t>(x_t.cols());
  const double c = cfg.huber_c_for(elements);
  LossResult<S> result;
  result.per_sample.resize(static_cast<std::size_t>(n));
  nn::Batch<S> grad_a(n, x_t.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double sq = static_cast<double>((a.row(i) - b.row(i)).squaredNorm());
    const double weight = loss_weight(t[ui], r[ui], cfg.weighting);
    double dist = 0.0;
    double ddist_dsq = 0.0;  // d(dist)/d(||a-b||^2)
    if (cfg.distance == Distance::pseudo_huber) {
      const double root = std::sqrt(sq + c * c);
      dist = root - c;
      ddist_dsq = 0.5 / root;
    } else {
      dist = sq;
      ddist_dsq = 1.0;
    }
    // A zero distance contributes nothing, even where the weight is unbounded (t == r).
    const double value = dist == 0.0 ? 0.0 : weight * dist;
    result.per_sample[ui] = static_cast<S>(value);
    total += value;
    const double scale = dist == 0.0 ? 0.0 : 2.0 * weight * ddist_dsq / static_cast<double>(n);
    grad_a.row(i) = (a.row(i) - b.row(i)) * static_cast<S>(scale);
  }
  result.mean = static_cast<S>(total / static_cast<double>(n));

  if (student_grad) {
    student_grad->resize(student.values.size(), S(0));
    fn.backward(student, tape, grad_a, *student_grad, gradient_probe);
  }
  return result;
}

void update_teacher(TrainState& state) {
  auto& teacher = state.teacher.values;
  const auto& student = state.student.values;
  if (state.teacher_cfg.mode == TeacherMode::stop_grad) {
    teacher = student;
    return;
  }
  const double decay = state.teacher_cfg.ema_decay;
  if (!(decay >= 0.0 && decay <= 1.0)) throw InvalidInput("ema decay must lie in [0, 1]");
  const auto d = static_cast<float>(decay);
  for (std::size_t i = 0; i < teacher.size(); ++i) teacher[i] = d * teacher[i] + (1.0f - d) * student[i];
}

Trainer::Trainer(const BackboneSpec& spec, TrainConfig cfg) : cfg_(std::move(cfg)), fn_(spec, cfg_.schedule.t_min) {
  cfg_.schedule.validate();
  if (cfg_.backdoor) cfg_.backdoor->validate(spec.shape);
}

void update_average(NetworkParams& average, const NetworkParams& student, double decay, std::int64_t k) {
  if (average.values.size() != student.values.size()) throw InvalidInput("update_average: size mismatch");
  const double d = std::min(decay, (1.0 + static_cast<double>(k)) / (10.0 + static_cast<double>(k)));
  for (std::size_t i = 0; i < average.values.size(); ++i) {
    average.values[i] = static_cast<float>(d * average.values[i] + (1.0 - d) * student.values[i]);
  }
}

StepReport Trainer::step(TrainState& state, std::span<const ImageTensor> clean_batch) const {
  if (clean_batch.empty()) throw EmptyInput("train_step: empty batch");
  const ImageShape shape = state.student.backbone.shape;
  const auto n = static_cast<Eigen::Index>(clean_batch.size());
  const auto d = static_cast<Eigen::Index>(shape.size());

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  nn::Batch<float> x_t(n, d);
  nn::Batch<float> x_r(n, d);
  std::vector<double> ts(clean_batch.size());
  std::vector<double> rs(clean_batch.size());
  std::vector<Branch> branches(clean_batch.size(), Branch::clean);
  ImageTensor eps(shape);

  for (std::size_t i = 0; i < clean_batch.size(); ++i) {
    require_same_shape(clean_batch[i].shape(), shape, "train_step clean image");
    if (cfg_.backdoor) branches[i] = poison_gate(uniform(state.gate_rng), cfg_.backdoor->poison_rate);
    // t and epsilon are drawn for every element so the noise stream does not
    // depend on which branch was taken.
    ts[i] = sample_t(state.noise_rng, cfg_.schedule);
    rs[i] = map_r(ts[i], state.k, cfg_.schedule);
    for (auto& v : eps.values()) v = normal(state.noise_rng);

    const ImageTensor* x0 = &clean_batch[i];
    const ImageTensor* trigger = nullptr;
    if (branches[i] == Branch::backdoor) {
      x0 = &cfg_.backdoor->target.image;
      trigger = &cfg_.backdoor->trigger.composed();
    }
    auto [pt, pr] = make_pair(*x0, trigger, ts[i], rs[i], eps);
    std::copy(pt.values().begin(), pt.values().end(), x_t.row(static_cast<Eigen::Index>(i)).data());
    std::copy(pr.values().begin(), pr.values().end(), x_r.row(static_cast<Eigen::Index>(i)).data());
  }

  StepReport report;
  std::vector<float> grads(state.student.values.size(), 0.0f);
  const LossResult<float> loss = consistency_loss(fn_, state.student, state.teacher, x_t, x_r, ts, rs, cfg_.loss,
                                                  &grads, &report.gradient_targets);

  for (std::size_t i = 0; i < clean_batch.size(); ++i) {
    const double value = loss.per_sample[i];
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << state.k << " (t=" << ts[i] << ", r=" << rs[i]
          << ", branch=" << to_string(branches[i]) << ")";
      throw TrainingAbort(msg.str());
    }
    if (branches[i] == Branch::clean) {
      report.clean_loss_sum += value;
      ++report.clean_count;
    } else {
      report.backdoor_loss_sum += value;
      ++report.backdoor_count;
    }
  }
  report.loss_mean = loss.mean;

  state.optimizer.step(state.student.view(), grads, cfg_.optimizer);
  update_teacher(state);
  ++state.k;
  return report;
}

StepReport train_step(TrainState& state, std::span<const ImageTensor> clean_batch, const TrainConfig& cfg) {
  return Trainer(state.student.backbone, cfg).step(state, clean_batch);
}

template LossResult<float> consistency_loss<float>(const ConsistencyFunction<float>&, const BasicNetworkParams<float>&,
                                                   const BasicNetworkParams<float>&, const nn::Batch<float>&,
                                                   const nn::Batch<float>&, std::span<const double>,
                                                   std::span<const double>, const LossConfig&, std::vector<float>*,
                                                   std::vector<const void*>*);
template LossResult<double> consistency_loss<double>(const ConsistencyFunction<double>&,
                                                     const BasicNetworkParams<double>&,
                                                     const BasicNetworkParams<double>&, const nn::Batch<double>&,
                                                     const nn::Batch<double>&, std::span<const double>,
                                                     std::span<const double>, const LossConfig&,
                                                     std::vector<double>*, std::vector<const void*>*);

}  // namespace bcm
