#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bcm {

/// C x H x W. Toy vectors use {D, 1, 1}.
struct ImageShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  bool valid() const noexcept { return channels > 0 && height > 0 && width > 0; }
  std::string str() const;

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Planar CHW float image. Pixel values live in [-1, 1] for data, targets and
/// triggers; intermediate noisy images are unbounded.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(ImageShape shape, float fill = 0.0f);
  ImageTensor(ImageShape shape, std::vector<float> values);

  const ImageShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  float& at(int c, int y, int x) { return values_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return values_[index(c, y, x)]; }
  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  bool all_finite() const noexcept;
  bool within_unit_range() const noexcept;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  ImageShape shape_{};
  std::vector<float> values_;
};

/// Throws InvalidInput unless `a` and `b` have identical shapes.
void require_same_shape(const ImageShape& a, const ImageShape& b, const char* what);

/// Byte in [0, 255] to [-1, 1]: v / 127.5 - 1.
constexpr float byte_to_unit(unsigned v) noexcept { return static_cast<float>(v) / 127.5f - 1.0f; }

/// Inverse of byte_to_unit with clamping and rounding.
unsigned char unit_to_byte(float v) noexcept;

}  // namespace bcm
