#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bcm/image.hpp"
#include "bcm/schedules.hpp"
#include "bcm/triggers.hpp"

namespace bcm {

/// Images sharing one shape, values in [-1, 1].
struct Dataset {
  std::string name;
  ImageShape shape{};
  std::vector<ImageTensor> images;

  std::size_t size() const noexcept { return images.size(); }
  /// Throws InvalidInput if empty, mixed-shape or out of range.
  void validate() const;
};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3072;
inline constexpr std::size_t kCifarBatchRecords = 10000;
inline constexpr std::size_t kCifarBatchBytes = kCifarRecordBytes * kCifarBatchRecords;  // 30,730,000

/// The five `data_batch_<i>.bin` files of the CIFAR-10 binary release.
/// Labels are dropped. Throws FormatError on a missing or wrongly sized file.
Dataset load_cifar10(const std::filesystem::path& dir);

enum class ToyKind { dirac, two_gaussians_2d, shapes_8x8 };

std::string_view to_string(ToyKind kind) noexcept;
ToyKind parse_toy_kind(std::string_view name);

/// The fixed point of the dirac dataset, shape {2, 1, 1}.
ImageTensor dirac_point();

/// dirac: n copies of dirac_point().
/// two_gaussians_2d: equal mixture of N(+(1,1), 0.1^2 I) and N(-(1,1), 0.1^2 I),
///   clamped into [-1, 1] (the clamp touches about half of the draws).
/// shapes_8x8: black background with one white square (side 2-4) or plus-shaped
///   cross (arm 1-2) at a random position.
Dataset make_toy_dataset(ToyKind kind, Rng& rng, std::size_t n);

/// Single-image dataset D_p. Throws InvalidInput if the target does not match
/// `expected` (the clean data shape).
Dataset make_target_dataset(const TargetSpec& target, const ImageShape& expected);

/// Epoch-shuffled minibatches with its own generator. A batch may wrap into
/// the next epoch.
class DataLoader {
 public:
  DataLoader(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  std::vector<ImageTensor> next();
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace bcm
