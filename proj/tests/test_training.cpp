#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bcm/datasets.hpp"
#include "bcm/errors.hpp"
#include "bcm/training.hpp"
#include "helpers.hpp"

using namespace bcm;
using bcm::testing::random_image;
using bcm::testing::randomize_group;

namespace {

const BackboneSpec kMlp{BackboneKind::tiny_mlp, {2, 1, 1}, 32, 16};

nn::Batch<double> rows_of(const std::vector<ImageTensor>& images) {
  return to_batch(images).cast<double>();
}

BackdoorConfig const_backdoor(const ImageShape& shape, double rho, float target) {
  return {rho, make_noise_trigger(3, shape), {ImageTensor(shape, target), "const"}};
}

std::vector<ImageTensor> toy_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return make_toy_dataset(ToyKind::two_gaussians_2d, rng, n).images;
}

}  // namespace

TEST_CASE("poison_gate") {
  for (double u : {0.0, 0.3, 0.999, 1.0}) CHECK(poison_gate(u, 0.0) == Branch::clean);
  for (double u : {0.0, 0.3, 0.999}) CHECK(poison_gate(u, 1.0) == Branch::backdoor);
  CHECK(poison_gate(0.1, 0.1) == Branch::clean);
  CHECK(poison_gate(0.0999, 0.1) == Branch::backdoor);
  CHECK_THROWS_AS(poison_gate(-0.1, 0.5), InvalidInput);
  CHECK_THROWS_AS(poison_gate(1.5, 0.5), InvalidInput);
}

TEST_CASE("poison_gate frequency at rho = 0.1 lies in the binomial 3-sigma band") {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int hits = 0;
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) hits += poison_gate(u(rng), 0.1) == Branch::backdoor;
  const double fraction = static_cast<double>(hits) / n;
  CHECK(fraction >= 0.094);
  CHECK(fraction <= 0.106);
}

TEST_CASE("make_pair examples") {
  const ImageShape s{1, 2, 2};
  const ImageTensor ones(s, 1.0f);
  const auto [xt, xr] = make_pair(ImageTensor(s), &ones, 2.0, 1.0, ImageTensor(s));
  CHECK(xt == ImageTensor(s, 2.0f));
  CHECK(xr == ImageTensor(s, 1.0f));

  const auto x0 = random_image(s, 1);
  const auto eps = random_image(s, 2);
  const ImageTensor zero(s);
  CHECK(make_pair(x0, &zero, 3.0, 1.0, eps) == make_pair(x0, nullptr, 3.0, 1.0, eps));
  const auto [a, b] = make_pair(x0, &ones, 1.5, 1.5, eps, true);
  CHECK(a == b);
}

TEST_CASE("make_pair rejects r >= t and shape mismatches") {
  const ImageShape s{1, 2, 2};
  CHECK_THROWS_AS(make_pair(ImageTensor(s), nullptr, 1.0, 1.0, ImageTensor(s)), InvalidInput);
  CHECK_THROWS_AS(make_pair(ImageTensor(s), nullptr, 1.0, 2.0, ImageTensor(s), true), InvalidInput);
  CHECK_THROWS_AS(make_pair(ImageTensor(s), nullptr, 2.0, 1.0, ImageTensor({1, 2, 3})), InvalidInput);
  const ImageTensor wrong({2, 2, 2});
  CHECK_THROWS_AS(make_pair(ImageTensor(s), &wrong, 2.0, 1.0, ImageTensor(s)), InvalidInput);
}

TEST_CASE("coupled noise: x_t - x_r == (t - r)(R + eps)") {
  const ImageShape s{3, 8, 8};
  const auto trigger = make_noise_trigger(5, s);
  Rng rng(6);
  ScheduleConfig cfg;
  cfg.ramp_period = 3;
  for (int trial = 0; trial < 200; ++trial) {
    const auto x0 = random_image(s, 100 + trial, 0.5f);
    const auto eps = random_image(s, 1000 + trial);
    const double t = sample_t(rng, cfg);
    const double r = map_r(t, trial, cfg);
    for (const ImageTensor* R : {static_cast<const ImageTensor*>(nullptr), &trigger.composed()}) {
      const auto [xt, xr] = make_pair(x0, R, t, r, eps);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double shift = (R ? (*R)[i] : 0.0) + eps[i];
        const double expected = (t - r) * shift;
        // Both halves are rounded to float once, so the identity holds to float resolution.
        const double tol = 4e-7 * (std::abs(x0[i]) + t * std::abs(shift)) + 1e-12;
        REQUIRE(std::abs((static_cast<double>(xt[i]) - xr[i]) - expected) <= tol);
      }
    }
  }
}

TEST_CASE("loss is zero for identical networks and inputs at t == r") {
  const auto params = init_params<double>(kMlp, 0.5, 1).cast<double>();
  auto p = params;
  randomize_group(p, "mlp.head.weight", 2, 0.3);
  const ConsistencyFunction<double> fn(kMlp, 0.002);
  const auto x = rows_of({random_image(kMlp.shape, 1), random_image(kMlp.shape, 2)});
  const std::vector<double> t = {0.7, 3.0};
  std::vector<double> grads;
  for (auto w : {Weighting::inverse_gap, Weighting::constant}) {
    for (auto d : {Distance::pseudo_huber, Distance::squared_l2}) {
      const auto res = consistency_loss(fn, p, p, x, x, t, t, {w, d, {}}, &grads);
      CHECK(res.mean == 0.0);
      CHECK(std::all_of(grads.begin(), grads.end(), [](double g) { return g == 0.0; }));
    }
  }
}

TEST_CASE("squared L2 with a unit offset per element gives D") {
  // At t = t_min the student is the identity; r below t_min makes the
  // teacher output x_r, so the two outputs differ by exactly the offset.
  const BackboneSpec spec{BackboneKind::tiny_mlp, {1, 4, 4}, 16, 8};
  auto p = init_params<double>(spec, 0.5, 3);
  randomize_group(p, "mlp.head.weight", 4, 0.3);
  const ConsistencyFunction<double> fn(spec, 0.002);
  const auto xr = random_image(spec.shape, 5);
  auto xt = xr;
  for (auto& v : xt.values()) v += 1.0f;
  const std::vector<double> t = {0.002};
  const std::vector<double> r = {0.0};
  const auto res = consistency_loss(fn, p, p, rows_of({xt}), rows_of({xr}), t, r,
                                    {Weighting::constant, Distance::squared_l2, {}});
  CHECK(res.mean == doctest::Approx(16.0).epsilon(1e-6));
}

TEST_CASE("pseudo-Huber is quadratic near zero: loss / |a-b|^2 -> 1/(2c)") {
  const BackboneSpec spec{BackboneKind::tiny_mlp, {1, 4, 4}, 16, 8};
  const auto p = init_params<double>(spec, 0.5, 3);
  const ConsistencyFunction<double> fn(spec, 0.002);
  const LossConfig cfg{Weighting::constant, Distance::pseudo_huber, {}};
  const double c = cfg.huber_c_for(16);
  CHECK(c == doctest::Approx(0.03 * 4.0));
  nn::Batch<double> xr = nn::Batch<double>::Zero(1, 16);
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    nn::Batch<double> xt = nn::Batch<double>::Constant(1, 16, delta);
    const double sq = 16 * delta * delta;
    const auto res = consistency_loss(fn, p, p, xt, xr, std::vector<double>{0.002}, std::vector<double>{0.0}, cfg);
    // Exact ratio is 1/(sqrt(sq + c^2) + c); it tends to 1/(2c).
    CHECK(res.mean / sq == doctest::Approx(1.0 / (2 * c)).epsilon(sq / (c * c)));
  }
}

TEST_CASE("loss weighting") {
  CHECK(loss_weight(3.0, 1.0, Weighting::inverse_gap) == 0.5);
  CHECK(loss_weight(3.0, 1.0, Weighting::constant) == 1.0);
  LossConfig bad;
  bad.huber_c = -1.0;
  CHECK_THROWS_AS(bad.huber_c_for(4), InvalidInput);
}

TEST_CASE("loss gradient matches central differences for both distances") {
  for (auto distance : {Distance::pseudo_huber, Distance::squared_l2}) {
    const BackboneSpec spec{BackboneKind::tiny_mlp, {2, 1, 1}, 16, 8};
    auto student = init_params<double>(spec, 0.5, 8);
    randomize_group(student, "mlp.head.weight", 9, 0.3);
    auto teacher = student;
    for (auto& v : teacher.values) v *= 0.97;
    const ConsistencyFunction<double> fn(spec, 0.002);
    const auto x0 = toy_batch(4, 10);
    std::vector<ImageTensor> xt_img;
    std::vector<ImageTensor> xr_img;
    const std::vector<double> t = {0.05, 0.8, 4.0, 30.0};
    const std::vector<double> r = {0.001, 0.6, 3.0, 25.0};
    for (std::size_t i = 0; i < 4; ++i) {
      const auto [a, b] = make_pair(x0[i], nullptr, t[i], r[i], random_image(spec.shape, 20 + i));
      xt_img.push_back(a);
      xr_img.push_back(b);
    }
    const auto xt = rows_of(xt_img);
    const auto xr = rows_of(xr_img);
    const LossConfig cfg{Weighting::inverse_gap, distance, {}};
    std::vector<double> grads;
    consistency_loss(fn, student, teacher, xt, xr, t, r, cfg, &grads);

    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> pick(0, student.values.size() - 1);
    int checked = 0;
    while (checked < 20) {
      const std::size_t i = pick(rng);
      auto plus = student;
      auto minus = student;
      const double h = 1e-6;
      plus.values[i] += h;
      minus.values[i] -= h;
      const double numeric = (consistency_loss(fn, plus, teacher, xt, xr, t, r, cfg).mean -
                              consistency_loss(fn, minus, teacher, xt, xr, t, r, cfg).mean) /
                             (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(grads[i]));
      if (scale < 1e-7) continue;
      CHECK(std::abs(numeric - grads[i]) / scale < 1e-4);
      ++checked;
    }
  }
}

TEST_CASE("loss and gradient are invariant under batch permutation") {
  const BackboneSpec spec{BackboneKind::small_unet, {1, 4, 4}, 4, 8};
  auto p = init_params<double>(spec, 0.5, 12);
  randomize_group(p, "unet.head.weight", 13, 0.3);
  const ConsistencyFunction<double> fn(spec, 0.002);
  std::vector<ImageTensor> xt;
  std::vector<ImageTensor> xr;
  std::vector<double> t = {0.3, 2.0, 9.0, 0.01, 50.0};
  std::vector<double> r = {0.2, 1.0, 0.0, 0.005, 49.0};
  for (int i = 0; i < 5; ++i) {
    xt.push_back(random_image(spec.shape, 40 + i, 3.0f));
    xr.push_back(random_image(spec.shape, 50 + i, 3.0f));
  }
  const LossConfig cfg;
  std::vector<double> g1;
  const auto l1 = consistency_loss(fn, p, p, rows_of(xt), rows_of(xr), t, r, cfg, &g1);
  const std::vector<std::size_t> perm = {3, 0, 4, 2, 1};
  std::vector<ImageTensor> pxt, pxr;
  std::vector<double> pt, pr;
  for (auto i : perm) {
    pxt.push_back(xt[i]);
    pxr.push_back(xr[i]);
    pt.push_back(t[i]);
    pr.push_back(r[i]);
  }
  std::vector<double> g2;
  const auto l2 = consistency_loss(fn, p, p, rows_of(pxt), rows_of(pxr), pt, pr, cfg, &g2);
  CHECK(l1.mean == doctest::Approx(l2.mean).epsilon(1e-12));
  for (std::size_t i = 0; i < g1.size(); ++i) REQUIRE(g1[i] == doctest::Approx(g2[i]).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("teacher update modes") {
  auto params = init_params<float>(kMlp, 0.5, 1);
  auto state = TrainState::create(params, 1);
  for (auto& v : state.student.values) v += 1.0f;
  update_teacher(state);
  CHECK(state.teacher == state.student);

  state = TrainState::create(params, 1, {TeacherMode::ema, 0.0});
  for (auto& v : state.student.values) v -= 0.5f;
  update_teacher(state);
  CHECK(state.teacher == state.student);

  state = TrainState::create(params, 1, {TeacherMode::ema, 0.9});
  std::fill(state.teacher.values.begin(), state.teacher.values.end(), 0.0f);
  std::fill(state.student.values.begin(), state.student.values.end(), 1.0f);
  update_teacher(state);
  for (float v : state.teacher.values) REQUIRE(v == doctest::Approx(0.1));
}

TEST_CASE("first Adam step moves each weight by about lr against its gradient") {
  AdamState adam;
  std::vector<float> params = {1.0f, -2.0f, 0.5f};
  const std::vector<float> grads = {0.3f, -4.0f, 0.0f};
  adam.step(params, grads, {0.01, 0.9, 0.999, 1e-8});
  CHECK(params[0] == doctest::Approx(0.99).epsilon(1e-5));
  CHECK(params[1] == doctest::Approx(-1.99).epsilon(1e-5));
  CHECK(params[2] == 0.5f);
  CHECK(adam.steps == 1);
}

TEST_CASE("train_step increments k once per call and never differentiates the teacher") {
  const auto data = toy_batch(16, 2);
  TrainConfig cfg;
  cfg.schedule.ramp_period = 5;
  cfg.backdoor = const_backdoor(kMlp.shape, 0.5, 0.5f);
  const Trainer trainer(kMlp, cfg);
  auto state = TrainState::create(init_params<float>(kMlp, 0.5, 4), 4);
  for (int n = 0; n < 12; ++n) {
    const auto before = state.k;
    const auto report = trainer.step(state, data);
    CHECK(state.k == before + 1);
    REQUIRE(report.gradient_targets.size() == 1);
    CHECK(report.gradient_targets.front() == static_cast<const void*>(&state.student));
    CHECK(report.gradient_targets.front() != static_cast<const void*>(&state.teacher));
    CHECK(report.clean_count + report.backdoor_count == 16);
  }
  CHECK(state.teacher == state.student);
}

TEST_CASE("rho = 0 is bit-identical to clean-only training") {
  const auto data = toy_batch(32, 3);
  TrainConfig clean_cfg;
  clean_cfg.schedule.ramp_period = 10;
  clean_cfg.optimizer.lr = 1e-3;
  TrainConfig backdoor_cfg = clean_cfg;
  backdoor_cfg.backdoor = const_backdoor(kMlp.shape, 0.0, 0.5f);
  auto clean = TrainState::create(init_params<float>(kMlp, 0.5, 5), 9);
  auto poisoned = clean;
  for (int i = 0; i < 100; ++i) {
    train_step(clean, data, clean_cfg);
    const auto report = train_step(poisoned, data, backdoor_cfg);
    REQUIRE(report.backdoor_count == 0);
  }
  CHECK(clean.student == poisoned.student);
  CHECK(clean.student.values != init_params<float>(kMlp, 0.5, 5).values);
}

TEST_CASE("rho = 1 on a single target lowers the loss") {
  const auto data = toy_batch(32, 4);
  TrainConfig cfg;
  cfg.schedule.ramp_period = 100;
  cfg.optimizer.lr = 1e-3;
  cfg.backdoor = const_backdoor(kMlp.shape, 1.0, 0.5f);
  const Trainer trainer(kMlp, cfg);
  auto state = TrainState::create(init_params<float>(kMlp, 0.5, 6), 6);
  std::vector<double> losses;
  for (int i = 0; i < 500; ++i) {
    const auto report = trainer.step(state, data);
    REQUIRE(report.clean_count == 0);
    losses.push_back(report.loss_mean);
  }
  const double lead = std::accumulate(losses.begin(), losses.begin() + 50, 0.0) / 50;
  const double trail = std::accumulate(losses.end() - 50, losses.end(), 0.0) / 50;
  CHECK(trail < lead);
}

TEST_CASE("a non-finite loss aborts with step context") {
  TrainConfig cfg;
  cfg.backdoor = const_backdoor(kMlp.shape, 0.0, 0.5f);
  auto params = init_params<float>(kMlp, 0.5, 7);
  randomize_group(params, "mlp.head.weight", 8, 1e30);
  auto state = TrainState::create(params, 7);
  try {
    train_step(state, toy_batch(4, 5), cfg);
    FAIL("expected TrainingAbort");
  } catch (const TrainingAbort& e) {
    const std::string what = e.what();
    CHECK(what.find("step 0") != std::string::npos);
    CHECK(what.find("t=") != std::string::npos);
    CHECK(what.find("r=") != std::string::npos);
    CHECK(what.find("branch=clean") != std::string::npos);
  }
  CHECK(state.k == 0);
}

TEST_CASE("backdoor config validation") {
  const ImageShape s{2, 1, 1};
  auto b = const_backdoor(s, 1.5, 0.5f);
  CHECK_THROWS_AS(b.validate(s), InvalidInput);
  b = const_backdoor(s, 0.5, 2.0f);
  CHECK_THROWS_AS(b.validate(s), InvalidInput);
  b = const_backdoor({1, 2, 1}, 0.5, 0.5f);
  CHECK_THROWS_AS(b.validate(s), InvalidInput);
}

TEST_CASE("enum names round-trip") {
  for (auto w : {Weighting::inverse_gap, Weighting::constant}) CHECK(parse_weighting(to_string(w)) == w);
  for (auto d : {Distance::pseudo_huber, Distance::squared_l2}) CHECK(parse_distance(to_string(d)) == d);
  for (auto m : {TeacherMode::stop_grad, TeacherMode::ema}) CHECK(parse_teacher_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_distance("l1"), InvalidInput);
}

TEST_CASE("update_average warms up and then follows the decay") {
  auto student = init_params<float>(kMlp, 0.5, 1);
  auto average = student;
  for (auto& v : student.values) v += 1.0f;
  const auto before = average.values;
  // k = 0: d = min(0.99, 1/10) = 0.1, so the average moves 90% of the way.
  update_average(average, student, 0.99, 0);
  CHECK(average.values[3] == doctest::Approx(before[3] + 0.9).epsilon(1e-6));
  auto late = init_params<float>(kMlp, 0.5, 1);
  update_average(late, student, 0.99, 1000000);
  CHECK(late.values[3] == doctest::Approx(before[3] + 0.01).epsilon(1e-4));
  NetworkParams other = init_params<float>(BackboneSpec{BackboneKind::tiny_mlp, {2, 1, 1}, 8, 4}, 0.5, 1);
  CHECK_THROWS_AS(update_average(other, student, 0.9, 0), InvalidInput);
}
