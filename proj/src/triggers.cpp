#include "bcm/triggers.hpp"

#include <cstdlib>
#include <random>

#include "bcm/errors.hpp"
#include "bcm/image_io.hpp"

#ifndef BCM_DEFAULT_ASSET_DIR
#define BCM_DEFAULT_ASSET_DIR "assets"
#endif

namespace bcm {

std::string_view to_string(TriggerKind kind) noexcept {
  switch (kind) {
    case TriggerKind::noise: return "noise";
    case TriggerKind::box: return "box";
    case TriggerKind::glasses: return "glasses";
    case TriggerKind::custom: return "custom";
  }
  return "custom";
}

TriggerKind parse_trigger_kind(std::string_view name) {
  if (name == "noise") return TriggerKind::noise;
  if (name == "box") return TriggerKind::box;
  if (name == "glasses") return TriggerKind::glasses;
  if (name == "custom") return TriggerKind::custom;
  throw InvalidInput("unknown trigger kind '" + std::string(name) + "'");
}

ImageTensor compose_R(const ImageTensor& mask, const ImageTensor& pattern, const ImageTensor& background) {
  require_same_shape(mask.shape(), pattern.shape(), "compose_R(mask, pattern)");
  require_same_shape(mask.shape(), background.shape(), "compose_R(mask, background)");
  ImageTensor out(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const float m = mask[i];
    if (m != 0.0f && m != 1.0f) throw InvalidInput("compose_R: mask value " + std::to_string(m) + " is not 0 or 1");
    out[i] = m * pattern[i] + (1.0f - m) * background[i];
  }
  return out;
}

TriggerSpec TriggerSpec::from_parts(TriggerKind kind, ImageTensor mask, ImageTensor pattern,
                                    const ImageTensor& background, std::optional<std::uint64_t> seed) {
  TriggerSpec spec;
  spec.composed_ = compose_R(mask, pattern, background);
  spec.kind_ = kind;
  spec.mask_ = std::move(mask);
  spec.pattern_ = std::move(pattern);
  spec.seed_ = seed;
  return spec;
}

TriggerSpec make_noise_trigger(std::uint64_t seed, const ImageShape& shape) {
  ImageTensor pattern(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : pattern.values()) v = normal(rng);
  return TriggerSpec::from_parts(TriggerKind::noise, ImageTensor(shape, 1.0f), std::move(pattern), ImageTensor(shape),
                                 seed);
}

TriggerSpec make_null_trigger(const ImageShape& shape) {
  return TriggerSpec::from_parts(TriggerKind::custom, ImageTensor(shape), ImageTensor(shape), ImageTensor(shape));
}

std::filesystem::path asset_directory() {
  if (const char* env = std::getenv("BCM_ASSET_DIR"); env != nullptr && *env != '\0') return env;
  return BCM_DEFAULT_ASSET_DIR;
}

std::filesystem::path asset_path(const std::filesystem::path& dir, std::string_view name, const ImageShape& shape) {
  return dir / (std::string(name) + "_" + std::to_string(shape.height) + "x" + std::to_string(shape.width) + ".pam");
}

namespace {

Raster load_asset_raster(const std::filesystem::path& file, const ImageShape& shape) {
  if (!std::filesystem::exists(file)) throw AssetError(file.string(), "file not found");
  Raster raster;
  try {
    raster = read_pam(file);
  } catch (const FormatError& e) {
    throw AssetError(file.string(), e.what());
  }
  if (raster.width != shape.width || raster.height != shape.height) {
    throw AssetError(file.string(), "size " + std::to_string(raster.height) + "x" + std::to_string(raster.width) +
                                        " does not match data shape " + shape.str());
  }
  return raster;
}

}  // namespace

TriggerSpec load_stencil_trigger(TriggerKind kind, const ImageShape& shape, const std::filesystem::path& dir) {
  if (kind != TriggerKind::box && kind != TriggerKind::glasses) {
    throw InvalidInput("load_stencil_trigger: kind must be box or glasses");
  }
  const auto file = asset_path(dir, to_string(kind), shape);
  const Raster raster = load_asset_raster(file, shape);
  if (raster.depth != 2) throw AssetError(file.string(), "stencil must be GRAYSCALE_ALPHA");

  ImageTensor mask(shape);
  ImageTensor pattern(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      const unsigned alpha = raster.at(y, x, 1);
      if (alpha != 0 && alpha != 255) throw AssetError(file.string(), "support channel must be 0 or 255");
      for (int c = 0; c < shape.channels; ++c) {
        mask.at(c, y, x) = alpha == 255 ? 1.0f : 0.0f;
        pattern.at(c, y, x) = byte_to_unit(raster.at(y, x, 0));
      }
    }
  }
  return TriggerSpec::from_parts(kind, std::move(mask), std::move(pattern), ImageTensor(shape));
}

TargetSpec load_target(const std::string& label, const ImageShape& shape, const std::filesystem::path& dir) {
  const auto file = asset_path(dir, label, shape);
  const Raster raster = load_asset_raster(file, shape);
  const bool rgb = raster.depth >= 3;
  if (rgb && shape.channels != 3) {
    throw AssetError(file.string(), "RGB target cannot be used for " + std::to_string(shape.channels) + "-channel data");
  }
  ImageTensor image(shape);
  for (int c = 0; c < shape.channels; ++c) {
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) image.at(c, y, x) = byte_to_unit(raster.at(y, x, rgb ? c : 0));
    }
  }
  return {std::move(image), label};
}

ImageTensor apply_trigger_to_noise(const ImageTensor& z, const TriggerSpec& trigger, double T) {
  require_same_shape(z.shape(), trigger.shape(), "apply_trigger_to_noise");
  ImageTensor out(z.shape());
  const auto scale = static_cast<float>(T);
  const ImageTensor& r = trigger.composed();
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = scale * (r[i] + z[i]);
  return out;
}

}  // namespace bcm
