#pragma once

#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "bcm/image.hpp"
#include "bcm/nn/ops.hpp"

namespace bcm::nn {

enum class BackboneKind { tiny_mlp, small_unet };

std::string_view to_string(BackboneKind kind) noexcept;
BackboneKind parse_backbone_kind(std::string_view name);

/// Everything needed to rebuild a backbone's parameter layout.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::tiny_mlp;
  ImageShape shape{};
  int width = 64;          // hidden units (mlp) or base channels (unet)
  int time_features = 16;  // Fourier features of c_noise

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

/// Intermediates recorded by a forward pass for the matching backward pass.
template <class S>
struct Tape {
  std::vector<Matrix<S>> saved;
  int batch = 0;
};

/// The raw network F(x_scaled, c_noise). Stateless: parameters are passed in,
/// so one instance serves student, teacher and concurrent inference.
template <class S>
class Backbone {
 public:
  virtual ~Backbone() = default;

  const BackboneSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }

  /// Random weights with a zero output head, so a fresh network outputs 0.
  virtual void initialize(std::span<S> params, std::mt19937_64& rng) const = 0;

  /// x: one flattened CHW sample per row; c_noise: one value per row.
  /// Records intermediates into `tape` when it is non-null.
  virtual Batch<S> forward(std::span<const S> params, const Batch<S>& x, std::span<const S> c_noise,
                           Tape<S>* tape) const = 0;

  /// Accumulates dL/dparams into `grads` and returns dL/dx.
  virtual Batch<S> backward(std::span<const S> params, const Tape<S>& tape, const Batch<S>& grad_out,
                            std::span<S> grads) const = 0;

 protected:
  explicit Backbone(BackboneSpec spec) : spec_(spec) {}

  BackboneSpec spec_;
  ParamLayout layout_;
};

template <class S>
std::unique_ptr<Backbone<S>> make_backbone(const BackboneSpec& spec);

/// Layout only, without choosing a scalar type.
ParamLayout backbone_layout(const BackboneSpec& spec);

}  // namespace bcm::nn
