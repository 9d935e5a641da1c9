#include "bcm/image.hpp"

#include <algorithm>
#include <cmath>

#include "bcm/errors.hpp"

namespace bcm {

std::string ImageShape::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

ImageTensor::ImageTensor(ImageShape shape, float fill) : shape_(shape), values_(shape.size(), fill) {
  if (!shape.valid()) throw InvalidInput("invalid image shape " + shape.str());
}

ImageTensor::ImageTensor(ImageShape shape, std::vector<float> values)
    : shape_(shape), values_(std::move(values)) {
  if (!shape.valid()) throw InvalidInput("invalid image shape " + shape.str());
  if (values_.size() != shape.size()) {
    throw InvalidInput("image of shape " + shape.str() + " needs " + std::to_string(shape.size()) +
                       " values, got " + std::to_string(values_.size()));
  }
}

bool ImageTensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

bool ImageTensor::within_unit_range() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return v >= -1.0f && v <= 1.0f; });
}

void require_same_shape(const ImageShape& a, const ImageShape& b, const char* what) {
  if (!(a == b)) throw InvalidInput(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

unsigned char unit_to_byte(float v) noexcept {
  const float scaled = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f;
  return static_cast<unsigned char>(std::lround(scaled));
}

}  // namespace bcm
