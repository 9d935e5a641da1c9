#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "bcm/errors.hpp"
#include "bcm/model.hpp"
#include "helpers.hpp"

using namespace bcm;
using bcm::testing::head_group;
using bcm::testing::random_image;
using bcm::testing::randomize_group;

namespace {

const BackboneSpec kMlp{BackboneKind::tiny_mlp, {2, 1, 1}, 32, 16};
const BackboneSpec kMlpImage{BackboneKind::tiny_mlp, {1, 8, 8}, 32, 16};
const BackboneSpec kUnet8{BackboneKind::small_unet, {1, 8, 8}, 8, 16};
const BackboneSpec kUnet32{BackboneKind::small_unet, {3, 32, 32}, 8, 16};

template <class S>
BasicNetworkParams<S> trained_looking(const BackboneSpec& spec, std::uint64_t seed) {
  auto p = init_params<S>(spec, 0.5, seed);
  randomize_group(p, head_group(spec), seed + 100, 0.2);
  return p;
}

// Central-difference check of d(sum_i w_i F_i)/d(theta) on `count` random weights.
double worst_raw_gradient_error(const BackboneSpec& spec, int count) {
  const auto params = trained_looking<double>(spec, 3);
  const auto backbone = nn::make_backbone<double>(spec);
  const int batch = 3;
  const auto d = static_cast<Eigen::Index>(spec.shape.size());
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  nn::Batch<double> x(batch, d);
  nn::Batch<double> w(batch, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = n(rng);
    w.data()[i] = n(rng);
  }
  const std::vector<double> c_noise = {-1.0, 0.1, 0.9};
  auto loss = [&](const std::vector<double>& values) {
    return backbone->forward(values, x, c_noise, nullptr).cwiseProduct(w).sum();
  };

  nn::Tape<double> tape;
  backbone->forward(params.view(), x, c_noise, &tape);
  std::vector<double> grads(params.values.size(), 0.0);
  backbone->backward(params.view(), tape, w, grads);

  std::uniform_int_distribution<std::size_t> pick(0, params.values.size() - 1);
  double worst = 0.0;
  int checked = 0;
  while (checked < count) {
    const std::size_t i = pick(rng);
    std::vector<double> plus = params.values;
    std::vector<double> minus = params.values;
    const double h = 1e-5;
    plus[i] += h;
    minus[i] -= h;
    const double numeric = (loss(plus) - loss(minus)) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(grads[i]));
    if (scale < 1e-7) continue;  // weight without influence on this batch
    worst = std::max(worst, std::abs(numeric - grads[i]) / scale);
    ++checked;
  }
  return worst;
}

}  // namespace

TEST_CASE("coefficients satisfy the boundary condition and known values") {
  const auto c = consistency_coefficients(0.002, 0.002, 0.5);
  CHECK(c.skip == 1.0);
  CHECK(c.out == 0.0);
  const auto big = consistency_coefficients(80.0, 0.002, 0.5);
  CHECK(big.skip == doctest::Approx(0.25 / (79.998 * 79.998 + 0.25)));
  CHECK(big.skip == doctest::Approx(3.9e-5).epsilon(0.01));
  CHECK(big.in == doctest::Approx(1.0 / std::sqrt(0.25 + 6400.0)));
  CHECK(big.noise == doctest::Approx(0.25 * std::log(80.0)));
}

TEST_CASE("boundary condition holds exactly for any parameters") {
  for (const auto& spec : {kMlp, kMlpImage, kUnet8, kUnet32}) {
    const auto params = trained_looking<float>(spec, 5);
    const auto x = random_image(spec.shape, 6, 2.0f);
    CHECK(consistency_forward(params, x, 0.002, 0.002) == x);
  }
}

TEST_CASE("output shape matches the input shape") {
  for (const auto& spec : {kMlp, kMlpImage, kUnet8, kUnet32}) {
    const auto params = trained_looking<float>(spec, 7);
    const auto out = consistency_forward(params, random_image(spec.shape, 8), 3.0, 0.002);
    CHECK(out.shape() == spec.shape);
    CHECK(out.all_finite());
  }
}

TEST_CASE("forward is deterministic and rejects bad input") {
  const auto params = trained_looking<float>(kUnet8, 9);
  const auto x = random_image(kUnet8.shape, 10);
  CHECK(consistency_forward(params, x, 1.5, 0.002) == consistency_forward(params, x, 1.5, 0.002));
  auto bad = x;
  bad[3] = NAN;
  CHECK_THROWS_AS(consistency_forward(params, bad, 1.5, 0.002), InvalidInput);
  CHECK_THROWS_AS(consistency_forward(params, x, 0.001, 0.002), InvalidInput);
}

TEST_CASE("zero-initialized head makes the raw network vanish") {
  for (const auto& spec : {kMlp, kUnet8}) {
    const auto params = init_params<float>(spec, 0.5, 11);
    const auto x = random_image(spec.shape, 12);
    const auto y = raw_forward<float>(params, x.values(), 0.3f);
    for (float v : y) REQUIRE(v == 0.0f);
    // Then the consistency function is c_skip(t) x.
    const auto c = consistency_coefficients(80.0, 0.002, 0.5);
    const auto out = consistency_forward(params, x, 80.0, 0.002);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == doctest::Approx(c.skip * x[i]).epsilon(1e-6));
  }
}

TEST_CASE("raw_forward is pure") {
  const auto params = trained_looking<float>(kMlp, 13);
  const std::vector<float> x = {0.3f, -0.8f};
  CHECK(raw_forward<float>(params, x, 0.1f) == raw_forward<float>(params, x, 0.1f));
}

TEST_CASE("consistency_forward regression snapshot at x = 0, t = 1") {
  const auto params = trained_looking<float>(kMlp, 21);
  const auto out = consistency_forward(params, ImageTensor(kMlp.shape), 1.0, 0.002);
  const auto c = consistency_coefficients(1.0, 0.002, 0.5);
  const auto raw = raw_forward<float>(params, std::vector<float>{0.0f, 0.0f}, static_cast<float>(c.noise));
  for (std::size_t i = 0; i < 2; ++i) CHECK(out[i] == doctest::Approx(c.out * raw[i]).epsilon(1e-6));
  CHECK(out[0] == doctest::Approx(0.00804466009).epsilon(1e-5));
  CHECK(out[1] == doctest::Approx(0.0190796256).epsilon(1e-5));
}

TEST_CASE("raw gradients match central differences") {
  CHECK(worst_raw_gradient_error(kMlp, 20) < 1e-4);
  CHECK(worst_raw_gradient_error(kMlpImage, 20) < 1e-4);
  CHECK(worst_raw_gradient_error(kUnet8, 20) < 1e-4);
  CHECK(worst_raw_gradient_error({BackboneKind::small_unet, {3, 4, 6}, 4, 8}, 20) < 1e-4);
}

TEST_CASE("params validation") {
  auto p = init_params<float>(kMlp, 0.5, 1);
  CHECK_NOTHROW(p.validate());
  p.values[0] = INFINITY;
  CHECK(!p.all_finite());
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = init_params<float>(kMlp, 0.5, 1);
  p.values.pop_back();
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = init_params<float>(kMlp, 0.0, 1);
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  CHECK_THROWS_AS(init_params<float>({BackboneKind::small_unet, {1, 7, 8}, 8, 16}, 0.5, 1), InvalidInput);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const auto dir = bcm::testing::scratch_dir("ckpt");
  for (const auto& spec : {kMlp, kUnet32}) {
    Checkpoint ckpt{trained_looking<float>(spec, 31), ScheduleConfig{}, 12345, "deadbeef"};
    ckpt.schedule.ramp_period = 77;
    save_checkpoint(dir / "a.ckpt", ckpt);
    const auto back = load_checkpoint(dir / "a.ckpt");
    CHECK(back == ckpt);
    CHECK(std::memcmp(back.params.values.data(), ckpt.params.values.data(), ckpt.params.values.size() * 4) == 0);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = bcm::testing::scratch_dir("ckpt_bad");
  Checkpoint ckpt{trained_looking<float>(kMlp, 1), ScheduleConfig{}, 1, "x"};
  save_checkpoint(dir / "good.ckpt", ckpt);
  std::ifstream in(dir / "good.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});

  std::ofstream(dir / "truncated.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
  CHECK_THROWS_AS(load_checkpoint(dir / "truncated.ckpt"), FormatError);

  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << wrong_magic;
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), FormatError);

  auto wrong_version = bytes;
  wrong_version[8] = 9;
  std::ofstream(dir / "version.ckpt", std::ios::binary) << wrong_version;
  CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), FormatError);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), FormatError);
}
