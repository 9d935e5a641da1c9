#include "bcm/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bcm/errors.hpp"

namespace bcm::nn {

std::size_t ParamLayout::add(std::string name, std::vector<int> shape) {
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  const std::size_t offset = total_;
  groups_.push_back({std::move(name), std::move(shape), offset, size});
  total_ += size;
  return offset;
}

const ParamGroup& ParamLayout::find(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw InvalidInput("no parameter group named '" + name + "'");
}

Dense Dense::add(ParamLayout& layout, const std::string& name, int in, int out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = layout.add(name + ".weight", {in, out});
  d.bias = layout.add(name + ".bias", {out});
  return d;
}

Conv3x3 Conv3x3::add(ParamLayout& layout, const std::string& name, int in, int out) {
  Conv3x3 c;
  c.in = in;
  c.out = out;
  c.weight = layout.add(name + ".weight", {3, 3, in, out});
  c.bias = layout.add(name + ".bias", {out});
  return c;
}

namespace {

template <class S>
Eigen::Map<const Matrix<S>> weights(std::span<const S> p, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix<S>>(p.data() + offset, rows, cols);
}

template <class S>
Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bias_row(std::span<const S> p, std::size_t offset, Eigen::Index n) {
  return Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(p.data() + offset, n);
}

// Visits every (destination row, source row) pair of a shifted copy:
// dst pixel (y, x) reads src pixel (y + dy, x + dx) when in bounds.
template <class F>
void for_each_shift(const Grid& g, int dy, int dx, F&& f) {
  const int x0 = std::max(0, -dx);
  const int x1 = std::min(g.width, g.width - dx);
  if (x1 <= x0) return;
  for (int b = 0; b < g.batch; ++b) {
    for (int y = 0; y < g.height; ++y) {
      const int yy = y + dy;
      if (yy < 0 || yy >= g.height) continue;
      const Eigen::Index dst = (static_cast<Eigen::Index>(b) * g.height + y) * g.width + x0;
      const Eigen::Index src = (static_cast<Eigen::Index>(b) * g.height + yy) * g.width + x0 + dx;
      f(dst, src, x1 - x0);
    }
  }
}

template <class S>
Matrix<S> im2col(const Matrix<S>& x, const Grid& g) {
  const Eigen::Index channels = x.cols();
  Matrix<S> col = Matrix<S>::Zero(g.rows(), 9 * channels);
  for (int k = 0; k < 9; ++k) {
    const int dy = k / 3 - 1;
    const int dx = k % 3 - 1;
    for (Eigen::Index c = 0; c < channels; ++c) {
      const S* src = x.col(c).data();
      S* dst = col.col(k * channels + c).data();
      for_each_shift(g, dy, dx, [&](Eigen::Index d, Eigen::Index s, int n) { std::copy_n(src + s, n, dst + d); });
    }
  }
  return col;
}

template <class S>
Matrix<S> col2im(const Matrix<S>& col, const Grid& g, Eigen::Index channels) {
  Matrix<S> x = Matrix<S>::Zero(g.rows(), channels);
  for (int k = 0; k < 9; ++k) {
    const int dy = k / 3 - 1;
    const int dx = k % 3 - 1;
    for (Eigen::Index c = 0; c < channels; ++c) {
      const S* src = col.col(k * channels + c).data();
      S* dst = x.col(c).data();
      for_each_shift(g, dy, dx, [&](Eigen::Index d, Eigen::Index s, int n) {
        for (int i = 0; i < n; ++i) dst[s + i] += src[d + i];
      });
    }
  }
  return x;
}

template <class S>
S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

}  // namespace

template <class S>
Matrix<S> dense_forward(const Dense& layer, std::span<const S> params, const Matrix<S>& x) {
  Matrix<S> y = x * weights(params, layer.weight, layer.in, layer.out);
  y.rowwise() += bias_row(params, layer.bias, layer.out);
  return y;
}

template <class S>
Matrix<S> dense_backward(const Dense& layer, std::span<const S> params, const Matrix<S>& x, const Matrix<S>& dy,
                         std::span<S> grads) {
  Eigen::Map<Matrix<S>> dw(grads.data() + layer.weight, layer.in, layer.out);
  Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> db(grads.data() + layer.bias, layer.out);
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  return dy * weights(params, layer.weight, layer.in, layer.out).transpose();
}

template <class S>
Matrix<S> conv3x3_forward(const Conv3x3& layer, std::span<const S> params, const Matrix<S>& x, const Grid& grid) {
  const Matrix<S> col = im2col(x, grid);
  Matrix<S> y = col * weights(params, layer.weight, 9 * layer.in, layer.out);
  y.rowwise() += bias_row(params, layer.bias, layer.out);
  return y;
}

template <class S>
Matrix<S> conv3x3_backward(const Conv3x3& layer, std::span<const S> params, const Matrix<S>& x, const Grid& grid,
                           const Matrix<S>& dy, std::span<S> grads) {
  const Matrix<S> col = im2col(x, grid);
  Eigen::Map<Matrix<S>> dw(grads.data() + layer.weight, 9 * layer.in, layer.out);
  Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> db(grads.data() + layer.bias, layer.out);
  dw.noalias() += col.transpose() * dy;
  db += dy.colwise().sum();
  const Matrix<S> dcol = dy * weights(params, layer.weight, 9 * layer.in, layer.out).transpose();
  return col2im(dcol, grid, layer.in);
}

template <class S>
Matrix<S> silu(const Matrix<S>& x) {
  return x.unaryExpr([](S v) { return v * sigmoid(v); });
}

template <class S>
Matrix<S> silu_backward(const Matrix<S>& x, const Matrix<S>& dy) {
  return x.binaryExpr(dy, [](S v, S g) {
    const S s = sigmoid(v);
    return g * s * (S(1) + v * (S(1) - s));
  });
}

template <class S>
Matrix<S> relu(const Matrix<S>& x) {
  return x.cwiseMax(S(0));
}

template <class S>
Matrix<S> avgpool2(const Matrix<S>& x, const Grid& g) {
  const Grid h = g.halved();
  Matrix<S> y(h.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (int b = 0; b < g.batch; ++b) {
      for (int yy = 0; yy < h.height; ++yy) {
        for (int xx = 0; xx < h.width; ++xx) {
          const Eigen::Index s = (static_cast<Eigen::Index>(b) * g.height + 2 * yy) * g.width + 2 * xx;
          y((static_cast<Eigen::Index>(b) * h.height + yy) * h.width + xx, c) =
              S(0.25) * (x(s, c) + x(s + 1, c) + x(s + g.width, c) + x(s + g.width + 1, c));
        }
      }
    }
  }
  return y;
}

template <class S>
Matrix<S> avgpool2_backward(const Matrix<S>& dy, const Grid& g) {
  const Grid h = g.halved();
  Matrix<S> dx(g.rows(), dy.cols());
  for (Eigen::Index c = 0; c < dy.cols(); ++c) {
    for (int b = 0; b < g.batch; ++b) {
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          dx((static_cast<Eigen::Index>(b) * g.height + y) * g.width + x, c) =
              S(0.25) * dy((static_cast<Eigen::Index>(b) * h.height + y / 2) * h.width + x / 2, c);
        }
      }
    }
  }
  return dx;
}

template <class S>
Matrix<S> upsample2(const Matrix<S>& x, const Grid& g) {
  const int H = g.height * 2;
  const int W = g.width * 2;
  Matrix<S> y(static_cast<Eigen::Index>(g.batch) * H * W, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (int b = 0; b < g.batch; ++b) {
      for (int yy = 0; yy < H; ++yy) {
        for (int xx = 0; xx < W; ++xx) {
          y((static_cast<Eigen::Index>(b) * H + yy) * W + xx, c) =
              x((static_cast<Eigen::Index>(b) * g.height + yy / 2) * g.width + xx / 2, c);
        }
      }
    }
  }
  return y;
}

template <class S>
Matrix<S> upsample2_backward(const Matrix<S>& dy, const Grid& g) {
  const int W = g.width * 2;
  Matrix<S> dx(g.rows(), dy.cols());
  for (Eigen::Index c = 0; c < dy.cols(); ++c) {
    for (int b = 0; b < g.batch; ++b) {
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          const Eigen::Index s = (static_cast<Eigen::Index>(b) * g.height * 2 + 2 * y) * W + 2 * x;
          dx((static_cast<Eigen::Index>(b) * g.height + y) * g.width + x, c) =
              dy(s, c) + dy(s + 1, c) + dy(s + W, c) + dy(s + W + 1, c);
        }
      }
    }
  }
  return dx;
}

template <class S>
void add_per_sample(Matrix<S>& y, const Matrix<S>& bias, int pixels) {
  for (Eigen::Index b = 0; b < bias.rows(); ++b) y.middleRows(b * pixels, pixels).rowwise() += bias.row(b);
}

template <class S>
Matrix<S> sum_per_sample(const Matrix<S>& dy, int batch, int pixels) {
  Matrix<S> out(batch, dy.cols());
  for (int b = 0; b < batch; ++b) out.row(b) = dy.middleRows(static_cast<Eigen::Index>(b) * pixels, pixels).colwise().sum();
  return out;
}

template <class S>
Matrix<S> to_pixels(const Batch<S>& x, int channels, const Grid& grid) {
  const Eigen::Index plane = static_cast<Eigen::Index>(grid.height) * grid.width;
  Matrix<S> out(grid.rows(), channels);
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < grid.batch; ++b) {
      out.col(c).segment(b * plane, plane) = x.row(b).segment(c * plane, plane).transpose();
    }
  }
  return out;
}

template <class S>
Batch<S> from_pixels(const Matrix<S>& x, int channels, const Grid& grid) {
  const Eigen::Index plane = static_cast<Eigen::Index>(grid.height) * grid.width;
  Batch<S> out(grid.batch, channels * plane);
  for (int c = 0; c < channels; ++c) {
    for (int b = 0; b < grid.batch; ++b) {
      out.row(b).segment(c * plane, plane) = x.col(c).segment(b * plane, plane).transpose();
    }
  }
  return out;
}

template <class S>
Matrix<S> fourier_features(std::span<const S> c_noise, int count) {
  const int half = count / 2;
  Matrix<S> out(static_cast<Eigen::Index>(c_noise.size()), 2 * half);
  for (std::size_t b = 0; b < c_noise.size(); ++b) {
    for (int i = 0; i < half; ++i) {
      const S w = static_cast<S>(std::numbers::pi * std::ldexp(1.0, i - half + 2));
      out(static_cast<Eigen::Index>(b), i) = std::sin(w * c_noise[b]);
      out(static_cast<Eigen::Index>(b), half + i) = std::cos(w * c_noise[b]);
    }
  }
  return out;
}

#define BCM_INSTANTIATE_OPS(S)                                                                                       \
  template Matrix<S> dense_forward<S>(const Dense&, std::span<const S>, const Matrix<S>&);                           \
  template Matrix<S> dense_backward<S>(const Dense&, std::span<const S>, const Matrix<S>&, const Matrix<S>&,         \
                                       std::span<S>);                                                                \
  template Matrix<S> conv3x3_forward<S>(const Conv3x3&, std::span<const S>, const Matrix<S>&, const Grid&);          \
  template Matrix<S> conv3x3_backward<S>(const Conv3x3&, std::span<const S>, const Matrix<S>&, const Grid&,          \
                                         const Matrix<S>&, std::span<S>);                                            \
  template Matrix<S> silu<S>(const Matrix<S>&);                                                                      \
  template Matrix<S> silu_backward<S>(const Matrix<S>&, const Matrix<S>&);                                           \
  template Matrix<S> relu<S>(const Matrix<S>&);                                                                      \
  template Matrix<S> avgpool2<S>(const Matrix<S>&, const Grid&);                                                     \
  template Matrix<S> avgpool2_backward<S>(const Matrix<S>&, const Grid&);                                            \
  template Matrix<S> upsample2<S>(const Matrix<S>&, const Grid&);                                                    \
  template Matrix<S> upsample2_backward<S>(const Matrix<S>&, const Grid&);                                           \
  template void add_per_sample<S>(Matrix<S>&, const Matrix<S>&, int);                                                \
  template Matrix<S> sum_per_sample<S>(const Matrix<S>&, int, int);                                                  \
  template Matrix<S> to_pixels<S>(const Batch<S>&, int, const Grid&);                                                \
  template Batch<S> from_pixels<S>(const Matrix<S>&, int, const Grid&);                                              \
  template Matrix<S> fourier_features<S>(std::span<const S>, int);

BCM_INSTANTIATE_OPS(float)
BCM_INSTANTIATE_OPS(double)

}  // namespace bcm::nn
