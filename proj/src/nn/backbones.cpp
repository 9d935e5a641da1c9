#include <cmath>

#include "bcm/errors.hpp"
#include "bcm/nn/backbone.hpp"

namespace bcm::nn {

std::string_view to_string(BackboneKind kind) noexcept {
  return kind == BackboneKind::tiny_mlp ? "tiny_mlp" : "small_unet";
}

BackboneKind parse_backbone_kind(std::string_view name) {
  if (name == "tiny_mlp") return BackboneKind::tiny_mlp;
  if (name == "small_unet") return BackboneKind::small_unet;
  throw InvalidInput("unknown backbone kind '" + std::string(name) + "'");
}

namespace {

template <class S>
void init_normal(std::span<S> params, std::size_t offset, std::size_t count, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (std::size_t i = 0; i < count; ++i) params[offset + i] = static_cast<S>(normal(rng));
}

template <class S>
void init_dense(const Dense& d, std::span<S> params, std::mt19937_64& rng, double gain = 1.0) {
  init_normal(params, d.weight, static_cast<std::size_t>(d.in) * d.out, gain / std::sqrt(d.in), rng);
}

template <class S>
void init_conv(const Conv3x3& c, std::span<S> params, std::mt19937_64& rng, double gain = 1.0) {
  init_normal(params, c.weight, static_cast<std::size_t>(9) * c.in * c.out, gain / std::sqrt(9.0 * c.in), rng);
}

// Walks a tape from the most recently saved entry backwards.
template <class S>
class TapeReader {
 public:
  explicit TapeReader(const Tape<S>& tape) : tape_(tape), next_(tape.saved.size()) {}
  const Matrix<S>& pop() {
    if (next_ == 0) throw InvalidInput("backward: tape exhausted");
    return tape_.saved[--next_];
  }

 private:
  const Tape<S>& tape_;
  std::size_t next_;
};

// ---------------------------------------------------------------------------
// tiny_mlp: [x, fourier(c_noise)] -> 3 x (dense, silu) -> dense head

template <class S>
class TinyMlp final : public Backbone<S> {
 public:
  explicit TinyMlp(const BackboneSpec& spec) : Backbone<S>(spec) {
    const int d = static_cast<int>(spec.shape.size());
    const int h = spec.width;
    auto& layout = this->layout_;
    hidden_[0] = Dense::add(layout, "mlp.fc0", d + spec.time_features, h);
    hidden_[1] = Dense::add(layout, "mlp.fc1", h, h);
    hidden_[2] = Dense::add(layout, "mlp.fc2", h, h);
    head_ = Dense::add(layout, "mlp.head", h, d);
  }

  void initialize(std::span<S> params, std::mt19937_64& rng) const override {
    std::fill(params.begin(), params.end(), S(0));
    for (const auto& d : hidden_) init_dense(d, params, rng);
  }

  Batch<S> forward(std::span<const S> params, const Batch<S>& x, std::span<const S> c_noise,
                   Tape<S>* tape) const override {
    const int d = static_cast<int>(this->spec_.shape.size());
    Matrix<S> h(x.rows(), d + this->spec_.time_features);
    h.leftCols(d) = x;
    h.rightCols(this->spec_.time_features) = fourier_features<S>(c_noise, this->spec_.time_features);
    if (tape) {
      tape->saved.clear();
      tape->batch = static_cast<int>(x.rows());
    }
    for (const auto& layer : hidden_) {
      Matrix<S> pre = dense_forward(layer, params, h);
      Matrix<S> act = silu(pre);
      if (tape) {
        tape->saved.push_back(std::move(h));
        tape->saved.push_back(std::move(pre));
      }
      h = std::move(act);
    }
    Matrix<S> out = dense_forward(head_, params, h);
    if (tape) tape->saved.push_back(std::move(h));
    return out;
  }

  Batch<S> backward(std::span<const S> params, const Tape<S>& tape, const Batch<S>& grad_out,
                    std::span<S> grads) const override {
    TapeReader<S> reader(tape);
    Matrix<S> g = grad_out;
    g = dense_backward(head_, params, reader.pop(), g, grads);
    for (int i = 2; i >= 0; --i) {
      const Matrix<S>& pre = reader.pop();
      const Matrix<S>& in = reader.pop();
      g = dense_backward(hidden_[i], params, in, silu_backward(pre, g), grads);
    }
    const int d = static_cast<int>(this->spec_.shape.size());
    return g.leftCols(d);
  }

 private:
  Dense hidden_[3];
  Dense head_;
};

// ---------------------------------------------------------------------------
// small_unet: two resolutions, three residual blocks, time embedding added
// as a per-channel bias inside every block.

struct ResBlock {
  Conv3x3 conv1;
  Dense emb;
  Conv3x3 conv2;

  static ResBlock add(ParamLayout& layout, const std::string& name, int channels, int emb_dim) {
    return {Conv3x3::add(layout, name + ".conv1", channels, channels),
            Dense::add(layout, name + ".emb", emb_dim, channels),
            Conv3x3::add(layout, name + ".conv2", channels, channels)};
  }

  template <class S>
  void initialize(std::span<S> params, std::mt19937_64& rng) const {
    init_conv(conv1, params, rng);
    init_dense(emb, params, rng);
    init_conv(conv2, params, rng, 0.5);
  }

  // Saves h, a0, y1, a1.
  template <class S>
  Matrix<S> forward(std::span<const S> params, const Matrix<S>& h, const Matrix<S>& emb_act, const Grid& grid,
                    Tape<S>* tape) const {
    Matrix<S> a0 = silu(h);
    Matrix<S> y1 = conv3x3_forward(conv1, params, a0, grid);
    add_per_sample(y1, dense_forward(emb, params, emb_act), grid.height * grid.width);
    Matrix<S> a1 = silu(y1);
    Matrix<S> out = h + conv3x3_forward(conv2, params, a1, grid);
    if (tape) {
      tape->saved.push_back(h);
      tape->saved.push_back(std::move(a0));
      tape->saved.push_back(std::move(y1));
      tape->saved.push_back(std::move(a1));
    }
    return out;
  }

  template <class S>
  Matrix<S> backward(std::span<const S> params, TapeReader<S>& reader, const Matrix<S>& emb_act, const Grid& grid,
                     const Matrix<S>& dout, Matrix<S>& d_emb_act, std::span<S> grads) const {
    const Matrix<S>& a1 = reader.pop();
    const Matrix<S>& y1 = reader.pop();
    const Matrix<S>& a0 = reader.pop();
    const Matrix<S>& h = reader.pop();
    const Matrix<S> d_a1 = conv3x3_backward(conv2, params, a1, grid, dout, grads);
    const Matrix<S> d_y1 = silu_backward(y1, d_a1);
    d_emb_act += dense_backward(emb, params, emb_act, sum_per_sample(d_y1, grid.batch, grid.height * grid.width), grads);
    const Matrix<S> d_a0 = conv3x3_backward(conv1, params, a0, grid, d_y1, grads);
    return dout + silu_backward(h, d_a0);
  }
};

template <class S>
class SmallUnet final : public Backbone<S> {
 public:
  explicit SmallUnet(const BackboneSpec& spec) : Backbone<S>(spec) {
    const auto& shape = spec.shape;
    if (shape.height < 2 || shape.width < 2 || shape.height % 2 != 0 || shape.width % 2 != 0) {
      throw InvalidInput("small_unet needs even spatial dimensions, got " + shape.str());
    }
    const int c = spec.width;
    emb_dim_ = 4 * c;
    auto& layout = this->layout_;
    temb0_ = Dense::add(layout, "unet.temb0", spec.time_features, emb_dim_);
    temb1_ = Dense::add(layout, "unet.temb1", emb_dim_, emb_dim_);
    conv_in_ = Conv3x3::add(layout, "unet.conv_in", shape.channels, c);
    block_hi_ = ResBlock::add(layout, "unet.block_hi", c, emb_dim_);
    down_ = Conv3x3::add(layout, "unet.down", c, 2 * c);
    block_lo_ = ResBlock::add(layout, "unet.block_lo", 2 * c, emb_dim_);
    up_ = Conv3x3::add(layout, "unet.up", 3 * c, c);
    block_out_ = ResBlock::add(layout, "unet.block_out", c, emb_dim_);
    head_ = Conv3x3::add(layout, "unet.head", c, shape.channels);
  }

  void initialize(std::span<S> params, std::mt19937_64& rng) const override {
    std::fill(params.begin(), params.end(), S(0));
    init_dense(temb0_, params, rng);
    init_dense(temb1_, params, rng);
    init_conv(conv_in_, params, rng);
    block_hi_.initialize(params, rng);
    init_conv(down_, params, rng);
    block_lo_.initialize(params, rng);
    init_conv(up_, params, rng);
    block_out_.initialize(params, rng);
  }

  Batch<S> forward(std::span<const S> params, const Batch<S>& x, std::span<const S> c_noise,
                   Tape<S>* tape) const override {
    const auto& shape = this->spec_.shape;
    const int c = this->spec_.width;
    const Grid grid{static_cast<int>(x.rows()), shape.height, shape.width};
    const Grid half = grid.halved();
    if (tape) {
      tape->saved.clear();
      tape->batch = grid.batch;
    }
    auto save = [&](const Matrix<S>& m) {
      if (tape) tape->saved.push_back(m);
    };

    Matrix<S> feats = fourier_features<S>(c_noise, this->spec_.time_features);
    Matrix<S> e1 = dense_forward(temb0_, params, feats);
    Matrix<S> e1a = silu(e1);
    Matrix<S> e2 = dense_forward(temb1_, params, e1a);
    Matrix<S> emb = silu(e2);
    save(feats);
    save(e1);
    save(e1a);
    save(e2);
    save(emb);

    Matrix<S> x0 = to_pixels<S>(x, shape.channels, grid);
    Matrix<S> h0 = conv3x3_forward(conv_in_, params, x0, grid);
    save(x0);
    Matrix<S> h1 = block_hi_.forward(params, h0, emb, grid, tape);

    Matrix<S> p = avgpool2(h1, grid);
    Matrix<S> h2 = block_lo_.forward(params, conv3x3_forward(down_, params, p, half), emb, half, tape);
    save(p);

    Matrix<S> cat(grid.rows(), 3 * c);
    cat.leftCols(2 * c) = upsample2(h2, half);
    cat.rightCols(c) = h1;
    Matrix<S> h3 = block_out_.forward(params, conv3x3_forward(up_, params, cat, grid), emb, grid, tape);
    save(cat);

    Matrix<S> a = silu(h3);
    Matrix<S> out = conv3x3_forward(head_, params, a, grid);
    save(h3);
    save(a);
    return from_pixels<S>(out, shape.channels, grid);
  }

  Batch<S> backward(std::span<const S> params, const Tape<S>& tape, const Batch<S>& grad_out,
                    std::span<S> grads) const override {
    const auto& shape = this->spec_.shape;
    const int c = this->spec_.width;
    const Grid grid{tape.batch, shape.height, shape.width};
    const Grid half = grid.halved();
    TapeReader<S> reader(tape);

    const Matrix<S>& a = reader.pop();
    const Matrix<S>& h3 = reader.pop();
    const Matrix<S>& cat = reader.pop();
    const Matrix<S> d_out = to_pixels<S>(grad_out, shape.channels, grid);
    const Matrix<S> d_h3 = silu_backward(h3, conv3x3_backward(head_, params, a, grid, d_out, grads));

    // Block inputs are the first entry each block saved; the embedding and
    // stem entries sit underneath the blocks on the tape.
    const Matrix<S>& emb = tape.saved[4];
    Matrix<S> d_emb = Matrix<S>::Zero(emb.rows(), emb.cols());

    const Matrix<S> d_h3in = block_out_.backward(params, reader, emb, grid, d_h3, d_emb, grads);
    const Matrix<S> d_cat = conv3x3_backward(up_, params, cat, grid, d_h3in, grads);

    const Matrix<S>& p = reader.pop();
    const Matrix<S> d_h2 = upsample2_backward<S>(d_cat.leftCols(2 * c), half);
    const Matrix<S> d_h2in = block_lo_.backward(params, reader, emb, half, d_h2, d_emb, grads);
    const Matrix<S> d_p = conv3x3_backward(down_, params, p, half, d_h2in, grads);
    const Matrix<S> d_h1 = avgpool2_backward(d_p, grid) + d_cat.rightCols(c);

    const Matrix<S> d_h0 = block_hi_.backward(params, reader, emb, grid, d_h1, d_emb, grads);
    const Matrix<S>& x0 = reader.pop();
    const Matrix<S> d_x0 = conv3x3_backward(conv_in_, params, x0, grid, d_h0, grads);

    reader.pop();  // emb
    const Matrix<S>& e2 = reader.pop();
    const Matrix<S>& e1a = reader.pop();
    const Matrix<S>& e1 = reader.pop();
    const Matrix<S>& feats = reader.pop();
    const Matrix<S> d_e1a = dense_backward(temb1_, params, e1a, silu_backward(e2, d_emb), grads);
    dense_backward(temb0_, params, feats, silu_backward(e1, d_e1a), grads);

    return from_pixels<S>(d_x0, shape.channels, grid);
  }

 private:
  int emb_dim_ = 0;
  Dense temb0_, temb1_;
  Conv3x3 conv_in_;
  ResBlock block_hi_;
  Conv3x3 down_;
  ResBlock block_lo_;
  Conv3x3 up_;
  ResBlock block_out_;
  Conv3x3 head_;
};

}  // namespace

template <class S>
std::unique_ptr<Backbone<S>> make_backbone(const BackboneSpec& spec) {
  if (!spec.shape.valid()) throw InvalidInput("backbone: invalid data shape " + spec.shape.str());
  if (spec.width < 1 || spec.time_features < 2 || spec.time_features % 2 != 0) {
    throw InvalidInput("backbone: width must be positive and time_features a positive even number");
  }
  switch (spec.kind) {
    case BackboneKind::tiny_mlp: return std::make_unique<TinyMlp<S>>(spec);
    case BackboneKind::small_unet: return std::make_unique<SmallUnet<S>>(spec);
  }
  throw InvalidInput("unknown backbone kind");
}

ParamLayout backbone_layout(const BackboneSpec& spec) { return make_backbone<float>(spec)->layout(); }

template std::unique_ptr<Backbone<float>> make_backbone<float>(const BackboneSpec&);
template std::unique_ptr<Backbone<double>> make_backbone<double>(const BackboneSpec&);

}  // namespace bcm::nn
