#include <doctest.h>

#include <fstream>
#include <numeric>

#include "bcm/datasets.hpp"
#include "bcm/errors.hpp"
#include "helpers.hpp"

using namespace bcm;

namespace {

// Writes five batch files where record r of batch b has label r % 10 and
// pixel i = (b + r + i) mod 256.
void write_fake_cifar(const std::filesystem::path& dir) {
  std::vector<char> bytes(kCifarBatchBytes);
  for (int b = 1; b <= 5; ++b) {
    for (std::size_t r = 0; r < kCifarBatchRecords; ++r) {
      char* rec = bytes.data() + r * kCifarRecordBytes;
      rec[0] = static_cast<char>(r % 10);
      for (std::size_t i = 0; i < 3072; ++i) rec[1 + i] = static_cast<char>((b + r + i) % 256);
    }
    std::ofstream(dir / ("data_batch_" + std::to_string(b) + ".bin"), std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

}  // namespace

TEST_CASE("cifar10 loader parses records bit-exactly") {
  const auto dir = bcm::testing::scratch_dir("cifar");
  write_fake_cifar(dir);
  const auto data = load_cifar10(dir);
  REQUIRE(data.size() == 50000);
  CHECK(data.shape == ImageShape{3, 32, 32});
  // Batch 2, record 17, channel G (plane 1), row 3, column 5.
  const auto& img = data.images[10000 + 17];
  const std::size_t i = 1024 + 3 * 32 + 5;
  CHECK(img[i] == byte_to_unit(static_cast<unsigned>((2 + 17 + i) % 256)));
  CHECK(img.at(1, 3, 5) == img[i]);
  for (const auto& im : data.images) REQUIRE(im.within_unit_range());
  CHECK(byte_to_unit(255) == 1.0f);
  CHECK(byte_to_unit(0) == -1.0f);
}

TEST_CASE("cifar10 loader rejects missing and truncated files") {
  const auto dir = bcm::testing::scratch_dir("cifar_bad");
  CHECK_THROWS_AS(load_cifar10(dir), FormatError);
  write_fake_cifar(dir);
  std::filesystem::resize_file(dir / "data_batch_3.bin", kCifarBatchBytes - 1);
  try {
    load_cifar10(dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("data_batch_3.bin") != std::string::npos);
  }
}

TEST_CASE("toy datasets") {
  Rng rng(1);
  const auto dirac = make_toy_dataset(ToyKind::dirac, rng, 10);
  for (const auto& img : dirac.images) CHECK(img == dirac_point());

  const auto gauss = make_toy_dataset(ToyKind::two_gaussians_2d, rng, 10000);
  double m0 = 0, m1 = 0;
  for (const auto& p : gauss.images) {
    m0 += p[0];
    m1 += p[1];
  }
  CHECK(std::abs(m0 / 10000) < 0.05);
  CHECK(std::abs(m1 / 10000) < 0.05);
  CHECK_NOTHROW(gauss.validate());

  const auto shapes = make_toy_dataset(ToyKind::shapes_8x8, rng, 500);
  CHECK_NOTHROW(shapes.validate());
  for (const auto& img : shapes.images) {
    const auto v = img.values();
    REQUIRE(std::count(v.begin(), v.end(), 1.0f) >= 4);
    REQUIRE(std::count(v.begin(), v.end(), 1.0f) + std::count(v.begin(), v.end(), -1.0f) == 64);
  }
  CHECK_THROWS_AS(make_toy_dataset(ToyKind::dirac, rng, 0), InvalidInput);
  CHECK_THROWS_AS(parse_toy_kind("mnist"), InvalidInput);
}

TEST_CASE("toy datasets are reproducible from the seed") {
  Rng a(9);
  Rng b(9);
  CHECK(make_toy_dataset(ToyKind::shapes_8x8, a, 50).images == make_toy_dataset(ToyKind::shapes_8x8, b, 50).images);
}

TEST_CASE("target datasets") {
  for (const char* label : {"hat", "cat"}) {
    for (ImageShape s : {ImageShape{1, 8, 8}, ImageShape{3, 32, 32}}) {
      const auto target = load_target(label, s);
      const auto data = make_target_dataset(target, s);
      REQUIRE(data.size() == 1);
      CHECK(data.images.front() == target.image);
      // Pixel values sit on the byte grid: mapping back and forth is lossless.
      for (float v : target.image.values()) REQUIRE(byte_to_unit(unit_to_byte(v)) == v);
    }
  }
  const auto hat = load_target("hat", {1, 8, 8});
  CHECK_THROWS_AS(make_target_dataset(hat, {3, 8, 8}), InvalidInput);
}

TEST_CASE("data loader shuffles per epoch and is reproducible") {
  Rng rng(2);
  const auto data = make_toy_dataset(ToyKind::shapes_8x8, rng, 10);
  DataLoader a(data, 4, 5);
  DataLoader b(data, 4, 5);
  std::vector<ImageTensor> seen;
  for (int i = 0; i < 5; ++i) {
    const auto batch = a.next();
    CHECK(batch == b.next());
    CHECK(batch.size() == 4);
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  CHECK(a.epoch() == 1);
  // The first epoch visits every image exactly once.
  for (const auto& img : data.images) {
    CHECK(std::count(seen.begin(), seen.begin() + 10, img) == std::count(data.images.begin(), data.images.end(), img));
  }
}
