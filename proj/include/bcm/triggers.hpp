#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "bcm/image.hpp"

namespace bcm {

enum class TriggerKind { noise, box, glasses, custom };

std::string_view to_string(TriggerKind kind) noexcept;
TriggerKind parse_trigger_kind(std::string_view name);

/// Backdoor trigger: binary mask M, pattern g and the composed image
/// R = M*g + (1-M)*background. Immutable once built.
class TriggerSpec {
 public:
  /// Validates the parts and composes R. Throws InvalidInput on shape
  /// mismatch or a non-binary mask.
  static TriggerSpec from_parts(TriggerKind kind, ImageTensor mask, ImageTensor pattern,
                                const ImageTensor& background, std::optional<std::uint64_t> seed = {});

  TriggerKind kind() const noexcept { return kind_; }
  const ImageTensor& mask() const noexcept { return mask_; }
  const ImageTensor& pattern() const noexcept { return pattern_; }
  const ImageTensor& composed() const noexcept { return composed_; }
  const ImageShape& shape() const noexcept { return composed_.shape(); }
  /// Only set for noise triggers.
  std::optional<std::uint64_t> seed() const noexcept { return seed_; }

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;

 private:
  TriggerSpec() = default;

  TriggerKind kind_ = TriggerKind::custom;
  ImageTensor mask_;
  ImageTensor pattern_;
  ImageTensor composed_;
  std::optional<std::uint64_t> seed_;
};

/// Backdoor target x' with a human-readable label ("hat", "cat", ...).
struct TargetSpec {
  ImageTensor image;
  std::string label;
};

/// Elementwise mask*pattern + (1-mask)*background.
ImageTensor compose_R(const ImageTensor& mask, const ImageTensor& pattern, const ImageTensor& background);

/// Pattern drawn once from N(0, I) with `seed`; all-ones mask so R == pattern.
TriggerSpec make_noise_trigger(std::uint64_t seed, const ImageShape& shape);

/// A trigger whose composed image is zero everywhere. Sampling with it is
/// clean sampling.
TriggerSpec make_null_trigger(const ImageShape& shape);

/// Directory holding trigger/target assets: $BCM_ASSET_DIR when set,
/// otherwise the directory configured at build time.
std::filesystem::path asset_directory();

/// `<name>_<H>x<W>.pam` inside `dir`.
std::filesystem::path asset_path(const std::filesystem::path& dir, std::string_view name, const ImageShape& shape);

/// Loads a GRAYSCALE_ALPHA stencil: alpha (0 or 255) is the mask support,
/// gray v maps to v/127.5 - 1 and is replicated over channels. Background
/// is the zero image. Throws AssetError for missing or corrupt files.
TriggerSpec load_stencil_trigger(TriggerKind kind, const ImageShape& shape,
                                 const std::filesystem::path& dir = asset_directory());

/// Loads a GRAYSCALE or RGB target image and converts it to `shape`.
TargetSpec load_target(const std::string& label, const ImageShape& shape,
                       const std::filesystem::path& dir = asset_directory());

/// Initial sample for a triggered one-step generation: T * (R + z).
ImageTensor apply_trigger_to_noise(const ImageTensor& z, const TriggerSpec& trigger, double T);

}  // namespace bcm
