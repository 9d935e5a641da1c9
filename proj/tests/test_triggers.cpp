#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bcm/errors.hpp"
#include "bcm/image_io.hpp"
#include "bcm/schedules.hpp"
#include "bcm/triggers.hpp"

using namespace bcm;

namespace {

ImageTensor filled(ImageShape s, std::initializer_list<float> v) { return ImageTensor(s, std::vector<float>(v)); }

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bcm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("compose_R elementwise example") {
  const ImageShape s{1, 2, 2};
  const auto r = compose_R(filled(s, {1, 0, 0, 0}), ImageTensor(s, 0.5f), ImageTensor(s, 0.0f));
  CHECK(r == filled(s, {0.5f, 0, 0, 0}));
}

TEST_CASE("compose_R with a full or empty mask") {
  const ImageShape s{3, 4, 4};
  Rng rng(1);
  std::normal_distribution<float> n;
  ImageTensor pattern(s);
  ImageTensor background(s);
  for (auto& v : pattern.values()) v = n(rng);
  for (auto& v : background.values()) v = n(rng);
  CHECK(compose_R(ImageTensor(s, 1.0f), pattern, background) == pattern);
  CHECK(compose_R(ImageTensor(s, 0.0f), pattern, background) == background);
}

TEST_CASE("compose_R is idempotent on its mask region") {
  const ImageShape s{1, 4, 4};
  ImageTensor mask(s);
  for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1.0f;
  const ImageTensor pattern(s, 0.7f);
  const ImageTensor background(s, -0.2f);
  const auto once = compose_R(mask, pattern, background);
  CHECK(compose_R(mask, pattern, once) == once);
}

TEST_CASE("compose_R rejects bad inputs") {
  const ImageShape s{1, 2, 2};
  CHECK_THROWS_AS(compose_R(ImageTensor(s, 0.5f), ImageTensor(s), ImageTensor(s)), InvalidInput);
  CHECK_THROWS_AS(compose_R(ImageTensor(s), ImageTensor({1, 2, 3}), ImageTensor(s)), InvalidInput);
}

TEST_CASE("noise trigger is deterministic, seed dependent and centred") {
  const ImageShape s{3, 32, 32};
  const auto a = make_noise_trigger(11, s);
  CHECK(a == make_noise_trigger(11, s));
  CHECK(!(a.pattern() == make_noise_trigger(12, s).pattern()));
  CHECK(a.composed() == a.pattern());
  CHECK(a.seed() == 11u);
  for (float m : a.mask().values()) REQUIRE(m == 1.0f);
  const auto v = a.pattern().values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  CHECK(std::abs(mean) < 0.1);
}

TEST_CASE("box stencil at 32x32 sits in the bottom-right corner") {
  const ImageShape s{3, 32, 32};
  const auto box = load_stencil_trigger(TriggerKind::box, s);
  bool any = false;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if (box.mask().at(c, y, x) != 0.0f) {
          any = true;
          REQUIRE(y >= 16);
          REQUIRE(x >= 16);
        }
      }
    }
  }
  CHECK(any);
  CHECK(load_stencil_trigger(TriggerKind::box, s) == box);
}

TEST_CASE("stencil triggers are zero outside their mask") {
  for (auto kind : {TriggerKind::box, TriggerKind::glasses}) {
    for (ImageShape s : {ImageShape{1, 8, 8}, ImageShape{3, 32, 32}}) {
      const auto trig = load_stencil_trigger(kind, s);
      for (std::size_t i = 0; i < trig.composed().size(); ++i) {
        if (trig.mask()[i] == 0.0f) REQUIRE(trig.composed()[i] == 0.0f);
      }
    }
  }
}

TEST_CASE("missing or corrupt stencil names the file") {
  const auto dir = scratch("assets");
  const ImageShape s{1, 8, 8};
  try {
    load_stencil_trigger(TriggerKind::box, s, dir);
    FAIL("expected AssetError");
  } catch (const AssetError& e) {
    CHECK(e.file() == asset_path(dir, "box", s).string());
  }
  std::ofstream(asset_path(dir, "glasses", s)) << "P7\nnonsense";
  CHECK_THROWS_AS(load_stencil_trigger(TriggerKind::glasses, s, dir), AssetError);

  Raster gray{8, 8, 1, std::vector<unsigned char>(64, 200)};
  write_pam(asset_path(dir, "box", s), gray);
  CHECK_THROWS_AS(load_stencil_trigger(TriggerKind::box, s, dir), AssetError);

  Raster soft{8, 8, 2, std::vector<unsigned char>(128, 100)};
  write_pam(asset_path(dir, "box", s), soft);
  CHECK_THROWS_AS(load_stencil_trigger(TriggerKind::box, s, dir), AssetError);
}

TEST_CASE("asset directory honours the environment override") {
  const auto dir = scratch("env_assets");
  Raster r{8, 8, 2, std::vector<unsigned char>(128, 0)};
  r.at(7, 7, 0) = 255;
  r.at(7, 7, 1) = 255;
  write_pam(dir / "box_8x8.pam", r);
  setenv("BCM_ASSET_DIR", dir.c_str(), 1);
  const auto trig = load_stencil_trigger(TriggerKind::box, {1, 8, 8});
  unsetenv("BCM_ASSET_DIR");
  CHECK(trig.composed().at(0, 7, 7) == 1.0f);
  CHECK(std::accumulate(trig.mask().values().begin(), trig.mask().values().end(), 0.0f) == 1.0f);
}

TEST_CASE("apply_trigger_to_noise") {
  const ImageShape s{1, 4, 4};
  Rng rng(9);
  std::normal_distribution<float> n;
  ImageTensor z1(s);
  ImageTensor z2(s);
  for (auto& v : z1.values()) v = n(rng);
  for (auto& v : z2.values()) v = n(rng);
  const auto null = make_null_trigger(s);
  const auto out = apply_trigger_to_noise(z1, null, 80.0);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 80.0f * z1[i]);

  const auto trig = make_noise_trigger(4, s);
  const auto base = apply_trigger_to_noise(ImageTensor(s), trig, 80.0);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == 80.0f * trig.composed()[i]);

  ImageTensor sum(s);
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = z1[i] + z2[i];
  const auto a = apply_trigger_to_noise(sum, trig, 80.0);
  const auto b = apply_trigger_to_noise(z2, trig, 80.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] - b[i] == doctest::Approx(80.0 * z1[i]).epsilon(1e-4));

  CHECK_THROWS_AS(apply_trigger_to_noise(ImageTensor({1, 2, 2}), trig, 80.0), InvalidInput);
}

TEST_CASE("trigger kind names round-trip") {
  for (auto k : {TriggerKind::noise, TriggerKind::box, TriggerKind::glasses, TriggerKind::custom}) {
    CHECK(parse_trigger_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_trigger_kind("warp"), InvalidInput);
}

TEST_CASE("pam and pnm round-trip") {
  const auto dir = scratch("io");
  Raster r{3, 2, 3, {}};
  for (int i = 0; i < 18; ++i) r.samples.push_back(static_cast<unsigned char>(i * 13));
  write_pam(dir / "a.pam", r);
  const auto back = read_pam(dir / "a.pam");
  CHECK(back.samples == r.samples);
  CHECK(back.depth == 3);
  write_pnm(dir / "a.ppm", r, {"config_hash=abc"});
  CHECK(read_pnm(dir / "a.ppm").samples == r.samples);
  std::ifstream in(dir / "a.ppm");
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  CHECK(second == "# config_hash=abc");
}
