#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "bcm/image.hpp"
#include "bcm/model.hpp"

namespace bcm::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bcm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ImageTensor random_image(const ImageShape& shape, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  ImageTensor img(shape);
  for (auto& v : img.values()) v = n(rng);
  return img;
}

/// Overwrites one named parameter group with N(0, scale^2) values.
template <class S>
void randomize_group(BasicNetworkParams<S>& params, const std::string& group, std::uint64_t seed, double scale) {
  const auto& g = nn::backbone_layout(params.backbone).find(group);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (std::size_t i = 0; i < g.size; ++i) params.values[g.offset + i] = static_cast<S>(n(rng));
}

inline std::string head_group(const BackboneSpec& spec) {
  return spec.kind == BackboneKind::tiny_mlp ? "mlp.head.weight" : "unet.head.weight";
}

}  // namespace bcm::testing
