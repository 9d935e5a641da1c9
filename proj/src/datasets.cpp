#include "bcm/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "bcm/errors.hpp"

namespace bcm {

void Dataset::validate() const {
  if (images.empty()) throw InvalidInput("dataset '" + name + "' is empty");
  for (const auto& img : images) {
    require_same_shape(img.shape(), shape, "dataset image");
    if (!img.within_unit_range()) throw InvalidInput("dataset '" + name + "' has pixels outside [-1, 1]");
  }
}

Dataset load_cifar10(const std::filesystem::path& dir) {
  const ImageShape shape{3, 32, 32};
  Dataset data{"cifar10", shape, {}};
  data.images.reserve(5 * kCifarBatchRecords);
  std::vector<unsigned char> bytes(kCifarBatchBytes);
  for (int b = 1; b <= 5; ++b) {
    const auto file = dir / ("data_batch_" + std::to_string(b) + ".bin");
    std::error_code ec;
    const auto size = std::filesystem::file_size(file, ec);
    if (ec) throw FormatError("cifar10: missing batch file '" + file.string() + "'");
    if (size != kCifarBatchBytes) {
      throw FormatError("cifar10: '" + file.string() + "' has " + std::to_string(size) + " bytes, expected " +
                        std::to_string(kCifarBatchBytes));
    }
    std::ifstream in(file, std::ios::binary);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw FormatError("cifar10: failed reading '" + file.string() + "'");
    for (std::size_t r = 0; r < kCifarBatchRecords; ++r) {
      const unsigned char* pixels = bytes.data() + r * kCifarRecordBytes + 1;  // skip label
      ImageTensor img(shape);
      for (std::size_t i = 0; i < shape.size(); ++i) img[i] = byte_to_unit(pixels[i]);
      data.images.push_back(std::move(img));
    }
  }
  return data;
}

std::string_view to_string(ToyKind kind) noexcept {
  switch (kind) {
    case ToyKind::dirac: return "dirac";
    case ToyKind::two_gaussians_2d: return "two_gaussians_2d";
    case ToyKind::shapes_8x8: return "shapes_8x8";
  }
  return "?";
}

ToyKind parse_toy_kind(std::string_view name) {
  for (auto k : {ToyKind::dirac, ToyKind::two_gaussians_2d, ToyKind::shapes_8x8}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidInput("unknown toy dataset '" + std::string(name) + "'");
}

ImageTensor dirac_point() { return ImageTensor({2, 1, 1}, {0.6f, -0.4f}); }

namespace {

ImageTensor random_shape(Rng& rng) {
  ImageTensor img({1, 8, 8}, -1.0f);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  if (pick(0, 1) == 0) {
    const int side = pick(2, 4);
    const int y0 = pick(0, 8 - side);
    const int x0 = pick(0, 8 - side);
    for (int y = y0; y < y0 + side; ++y) {
      for (int x = x0; x < x0 + side; ++x) img.at(0, y, x) = 1.0f;
    }
  } else {
    const int arm = pick(1, 2);
    const int cy = pick(arm, 7 - arm);
    const int cx = pick(arm, 7 - arm);
    for (int d = -arm; d <= arm; ++d) {
      img.at(0, cy + d, cx) = 1.0f;
      img.at(0, cy, cx + d) = 1.0f;
    }
  }
  return img;
}

}  // namespace

Dataset make_toy_dataset(ToyKind kind, Rng& rng, std::size_t n) {
  if (n == 0) throw InvalidInput("make_toy_dataset: n must be at least 1");
  Dataset data;
  data.name = std::string(to_string(kind));
  data.images.reserve(n);
  switch (kind) {
    case ToyKind::dirac:
      data.shape = {2, 1, 1};
      data.images.assign(n, dirac_point());
      break;
    case ToyKind::two_gaussians_2d: {
      data.shape = {2, 1, 1};
      std::normal_distribution<float> noise(0.0f, 0.1f);
      std::bernoulli_distribution side(0.5);
      for (std::size_t i = 0; i < n; ++i) {
        const float c = side(rng) ? 1.0f : -1.0f;
        ImageTensor p(data.shape);
        for (auto& v : p.values()) v = std::clamp(c + noise(rng), -1.0f, 1.0f);
        data.images.push_back(std::move(p));
      }
      break;
    }
    case ToyKind::shapes_8x8:
      data.shape = {1, 8, 8};
      for (std::size_t i = 0; i < n; ++i) data.images.push_back(random_shape(rng));
      break;
  }
  return data;
}

Dataset make_target_dataset(const TargetSpec& target, const ImageShape& expected) {
  require_same_shape(target.image.shape(), expected, "backdoor target vs clean data");
  Dataset data{"target:" + target.label, expected, {target.image}};
  data.validate();
  return data;
}

DataLoader::DataLoader(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), rng_(seed) {
  if (data.images.empty()) throw EmptyInput("DataLoader: empty dataset");
  if (batch_size == 0) throw InvalidInput("DataLoader: batch size must be positive");
  order_.resize(data.images.size());
  reshuffle();
}

void DataLoader::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<ImageTensor> DataLoader::next() {
  std::vector<ImageTensor> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    batch.push_back(data_->images[order_[cursor_++]]);
  }
  return batch;
}

}  // namespace bcm
