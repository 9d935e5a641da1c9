#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bcm/image.hpp"
#include "bcm/nn/backbone.hpp"
#include "bcm/schedules.hpp"

namespace bcm {

using nn::BackboneKind;
using nn::BackboneSpec;

/// Parameters of one consistency network (student and teacher are two
/// instances). Values are a flat buffer whose named groups come from the
/// backbone layout.
template <class S>
struct BasicNetworkParams {
  BackboneSpec backbone{};
  double data_sigma = 0.5;
  std::vector<S> values;

  std::span<const S> view() const noexcept { return values; }
  std::span<S> view() noexcept { return values; }
  bool all_finite() const noexcept;
  /// Throws InvalidInput on a size/layout mismatch, non-positive sigma or non-finite values.
  void validate() const;

  template <class U>
  BasicNetworkParams<U> cast() const {
    return {backbone, data_sigma, std::vector<U>(values.begin(), values.end())};
  }

  friend bool operator==(const BasicNetworkParams&, const BasicNetworkParams&) = default;
};

using NetworkParams = BasicNetworkParams<float>;

/// Fresh parameters: random weights, zero output head.
template <class S>
BasicNetworkParams<S> init_params(const BackboneSpec& spec, double data_sigma, std::uint64_t seed);

/// Preconditioning that makes f(x, t_min) = x hold structurally:
///   skip  = sd^2 / ((t - t_min)^2 + sd^2)
///   out   = sd (t - t_min) / sqrt(sd^2 + t^2)
///   in    = 1 / sqrt(sd^2 + t^2)
///   noise = ln(t) / 4
struct ConsistencyCoefficients {
  double skip = 1.0;
  double out = 0.0;
  double in = 1.0;
  double noise = 0.0;
};

ConsistencyCoefficients consistency_coefficients(double t, double t_min, double data_sigma);

/// Per-sample record of a forward pass, consumed by `backward`.
template <class S>
struct ConsistencyTape {
  nn::Tape<S> backbone;
  std::vector<ConsistencyCoefficients> coeffs;
};

/// f(x, t) = skip(t) x + out(t) F(in(t) x, noise(t)) around a stateless backbone.
template <class S>
class ConsistencyFunction {
 public:
  ConsistencyFunction(const BackboneSpec& spec, double t_min);

  const nn::Backbone<S>& backbone() const noexcept { return *backbone_; }
  double t_min() const noexcept { return t_min_; }

  /// One time per row of x. Rejects non-finite inputs and t < t_min.
  nn::Batch<S> forward(const BasicNetworkParams<S>& params, const nn::Batch<S>& x, std::span<const double> t,
                       ConsistencyTape<S>* tape = nullptr) const;

  /// Accumulates dL/dparams for the tape's forward pass into `grads`. When
  /// `probe` is given, the address of every parameter set that received a
  /// gradient is appended to it.
  void backward(const BasicNetworkParams<S>& params, const ConsistencyTape<S>& tape, const nn::Batch<S>& grad_out,
                std::span<S> grads, std::vector<const void*>* probe = nullptr) const;

 private:
  std::shared_ptr<const nn::Backbone<S>> backbone_;
  double t_min_;
};

/// The raw backbone F(x_scaled, t_embed) for a single sample.
template <class S>
std::vector<S> raw_forward(const BasicNetworkParams<S>& params, std::span<const S> x_scaled, S t_embed);

/// Single-image convenience wrapper of ConsistencyFunction::forward.
ImageTensor consistency_forward(const NetworkParams& params, const ImageTensor& x, double t, double t_min);

/// Rows of a batch from images (and back).
nn::Batch<float> to_batch(std::span<const ImageTensor> images);
std::vector<ImageTensor> from_batch(const nn::Batch<float>& batch, const ImageShape& shape);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkParams params;
  ScheduleConfig schedule;
  std::int64_t iteration = 0;
  std::string config_hash;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout (all integers little-endian):
///   8 bytes   magic "BCMCKPT\0"
///   u32       format version
///   u64       header length L
///   L bytes   JSON header: version, backbone {kind, shape, width, time_features},
///             data_sigma, schedule {...}, iteration, config_hash,
///             groups [{name, shape, offset, size}]
///   u64       value count N
///   N x f32   parameter values, IEEE-754 binary32
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace bcm
