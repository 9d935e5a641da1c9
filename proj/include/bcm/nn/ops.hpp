#pragma once

// Dense building blocks with hand-written backward passes. Activations are
// column-major matrices with one row per (sample, pixel) and one column per
// channel, so a 3x3 convolution is an im2col followed by one GEMM.
//
// Parameters live in one flat buffer; layers only hold offsets into it.

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bcm::nn {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// One flattened CHW sample per row.
template <class S>
using Batch = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamGroup {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Ordered named groups over a flat parameter buffer.
class ParamLayout {
 public:
  std::size_t add(std::string name, std::vector<int> shape);
  const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
  std::size_t total() const noexcept { return total_; }
  const ParamGroup& find(const std::string& name) const;

 private:
  std::vector<ParamGroup> groups_;
  std::size_t total_ = 0;
};

/// Fully connected layer: y = x W + b with W stored (in x out), column-major.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;

  static Dense add(ParamLayout& layout, const std::string& name, int in, int out);
};

/// 3x3 same-padded convolution; W stored (9*in x out), row index (ky*3+kx)*in + c.
struct Conv3x3 {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;

  static Conv3x3 add(ParamLayout& layout, const std::string& name, int in, int out);
};

/// Spatial arrangement of activation rows: row = (b*height + y)*width + x.
struct Grid {
  int batch = 0;
  int height = 0;
  int width = 0;

  Eigen::Index rows() const noexcept { return static_cast<Eigen::Index>(batch) * height * width; }
  Grid halved() const noexcept { return {batch, height / 2, width / 2}; }
};

template <class S>
Matrix<S> dense_forward(const Dense& layer, std::span<const S> params, const Matrix<S>& x);
/// Accumulates into `grads`; returns dL/dx.
template <class S>
Matrix<S> dense_backward(const Dense& layer, std::span<const S> params, const Matrix<S>& x, const Matrix<S>& dy,
                         std::span<S> grads);

template <class S>
Matrix<S> conv3x3_forward(const Conv3x3& layer, std::span<const S> params, const Matrix<S>& x, const Grid& grid);
template <class S>
Matrix<S> conv3x3_backward(const Conv3x3& layer, std::span<const S> params, const Matrix<S>& x, const Grid& grid,
                           const Matrix<S>& dy, std::span<S> grads);

template <class S>
Matrix<S> silu(const Matrix<S>& x);
template <class S>
Matrix<S> silu_backward(const Matrix<S>& x, const Matrix<S>& dy);

template <class S>
Matrix<S> relu(const Matrix<S>& x);

/// 2x2 average pooling; `grid` describes the input.
template <class S>
Matrix<S> avgpool2(const Matrix<S>& x, const Grid& grid);
template <class S>
Matrix<S> avgpool2_backward(const Matrix<S>& dy, const Grid& grid);

/// Nearest-neighbour 2x upsampling; `grid` describes the input.
template <class S>
Matrix<S> upsample2(const Matrix<S>& x, const Grid& grid);
template <class S>
Matrix<S> upsample2_backward(const Matrix<S>& dy, const Grid& grid);

/// y.row(b*pixels + p) += bias.row(b)
template <class S>
void add_per_sample(Matrix<S>& y, const Matrix<S>& bias, int pixels);
/// Inverse bookkeeping of add_per_sample: sums the rows of each sample.
template <class S>
Matrix<S> sum_per_sample(const Matrix<S>& dy, int batch, int pixels);

/// (B, C*H*W) CHW rows to (B*H*W, C) activations, and back.
template <class S>
Matrix<S> to_pixels(const Batch<S>& x, int channels, const Grid& grid);
template <class S>
Batch<S> from_pixels(const Matrix<S>& x, int channels, const Grid& grid);

/// Fixed Fourier features of the noise embedding: [sin(w_i c), cos(w_i c)] with
/// w_i = pi * 2^(i-2), i = 0 .. count/2 - 1.
template <class S>
Matrix<S> fourier_features(std::span<const S> c_noise, int count);

}  // namespace bcm::nn
