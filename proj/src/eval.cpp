#include "bcm/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

#include "bcm/errors.hpp"
#include "bcm/nn/ops.hpp"

namespace bcm {

double mse_specificity(std::span<const ImageTensor> samples, const ImageTensor& target) {
  if (samples.empty()) throw EmptyInput("mse_specificity: no samples");
  double total = 0.0;
  for (const auto& s : samples) {
    require_same_shape(s.shape(), target.shape(), "mse_specificity");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double d = 0.5 * (static_cast<double>(s[i]) - target[i]);
      total += d * d;
    }
  }
  return total / (static_cast<double>(samples.size()) * static_cast<double>(target.size()));
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw InvalidInput("gaussian_stats: need at least 2 feature vectors");
  GaussianStats stats;
  stats.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - stats.mean.transpose();
  stats.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose()).eval();
  return stats;
}

namespace {

constexpr double kTolerance = 1e-6;

void check_psd(const Eigen::MatrixXd& s, const Eigen::VectorXd& eigenvalues, const char* name) {
  const double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
  if (eigenvalues.size() > 0 && eigenvalues.minCoeff() < -kTolerance * scale) {
    throw InvalidInput(std::string("frechet_distance: ") + name + " is not positive semidefinite");
  }
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                        const Eigen::MatrixXd& s2) {
  const auto d = m1.size();
  if (m2.size() != d || s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d) {
    throw InvalidInput("frechet_distance: dimension mismatch");
  }
  if (d == 0) throw InvalidInput("frechet_distance: zero-dimensional input");

  const Eigen::MatrixXd a1 = 0.5 * (s1 + s1.transpose());
  const Eigen::MatrixXd a2 = 0.5 * (s2 + s2.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig1(a1);
  check_psd(a1, eig1.eigenvalues(), "S1");
  check_psd(a2, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a2, Eigen::EigenvaluesOnly).eigenvalues(), "S2");

  const Eigen::VectorXd root_vals = eig1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root1 = eig1.eigenvectors() * root_vals.asDiagonal() * eig1.eigenvectors().transpose();
  Eigen::MatrixXd inner = root1 * a2 * root1;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const Eigen::VectorXd lambda =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(inner, Eigen::EigenvaluesOnly).eigenvalues();
  const double trace_root = lambda.cwiseMax(0.0).cwiseSqrt().sum();

  const double value = (m1 - m2).squaredNorm() + a1.trace() + a2.trace() - 2.0 * trace_root;
  if (value < 0.0) {
    if (value > -kTolerance) return 0.0;
    throw InvalidInput("frechet_distance: negative result " + std::to_string(value));
  }
  return value;
}

namespace {

class PixelExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "pixel"; }
  Eigen::MatrixXd extract(std::span<const ImageTensor> images) const override {
    if (images.empty()) return {};
    const auto d = static_cast<Eigen::Index>(images.front().size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), d);
    for (std::size_t i = 0; i < images.size(); ++i) {
      require_same_shape(images[i].shape(), images.front().shape(), "pixel features");
      for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = images[i][static_cast<std::size_t>(j)];
    }
    return out;
  }
};

// Fixed random two-layer conv stack:
//   conv3x3 C->16, ReLU -> global mean (16 features)
//   avgpool 2, conv3x3 16->32, ReLU -> means over a 2x2 grid of cells (128 features)
class RandConvExtractor final : public FeatureExtractor {
 public:
  static constexpr int kWidth1 = 16;
  static constexpr int kWidth2 = 32;

  explicit RandConvExtractor(std::uint64_t seed) : seed_(seed) {}

  std::string id() const override { return "randconv(" + std::to_string(seed_) + ")"; }

  Eigen::MatrixXd extract(std::span<const ImageTensor> images) const override {
    if (images.empty()) return {};
    const ImageShape shape = images.front().shape();
    if (shape.height % 4 != 0 || shape.width % 4 != 0) {
      throw InvalidInput("randconv features need height and width divisible by 4, got " + shape.str());
    }
    nn::ParamLayout layout;
    const auto conv1 = nn::Conv3x3::add(layout, "conv1", shape.channels, kWidth1);
    const auto conv2 = nn::Conv3x3::add(layout, "conv2", kWidth1, kWidth2);
    std::vector<double> params(layout.total(), 0.0);
    std::mt19937_64 rng(seed_);
    auto fill = [&](const nn::Conv3x3& conv) {
      std::normal_distribution<double> w(0.0, std::sqrt(2.0 / (9.0 * conv.in)));
      for (int i = 0; i < 9 * conv.in * conv.out; ++i) params[conv.weight + static_cast<std::size_t>(i)] = w(rng);
      std::normal_distribution<double> b(0.0, 0.1);
      for (int i = 0; i < conv.out; ++i) params[conv.bias + static_cast<std::size_t>(i)] = b(rng);
    };
    fill(conv1);
    fill(conv2);
    const std::span<const double> view(params);

    constexpr std::size_t kChunk = 128;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), kWidth1 + 4 * kWidth2);
    for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
      const std::size_t end = std::min(images.size(), begin + kChunk);
      const int b = static_cast<int>(end - begin);
      nn::Batch<double> x(b, static_cast<Eigen::Index>(shape.size()));
      for (int i = 0; i < b; ++i) {
        const auto& img = images[begin + static_cast<std::size_t>(i)];
        require_same_shape(img.shape(), shape, "randconv features");
        for (std::size_t j = 0; j < img.size(); ++j) x(i, static_cast<Eigen::Index>(j)) = img[j];
      }
      const nn::Grid g1{b, shape.height, shape.width};
      const nn::Matrix<double> h1 = nn::relu(nn::conv3x3_forward(conv1, view, nn::to_pixels(x, shape.channels, g1), g1));
      const nn::Grid g2 = g1.halved();
      const nn::Matrix<double> h2 = nn::relu(nn::conv3x3_forward(conv2, view, nn::avgpool2(h1, g1), g2));

      const int p1 = g1.height * g1.width;
      const int ch = g2.height / 2;
      const int cw = g2.width / 2;
      for (int i = 0; i < b; ++i) {
        const auto row = static_cast<Eigen::Index>(begin) + i;
        out.row(row).head(kWidth1) = h1.middleRows(static_cast<Eigen::Index>(i) * p1, p1).colwise().mean();
        for (int cell = 0; cell < 4; ++cell) {
          const int cy = cell / 2;
          const int cx = cell % 2;
          Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(kWidth2);
          for (int y = cy * ch; y < (cy + 1) * ch; ++y) {
            for (int xx = cx * cw; xx < (cx + 1) * cw; ++xx) {
              acc += h2.row((static_cast<Eigen::Index>(i) * g2.height + y) * g2.width + xx);
            }
          }
          out.row(row).segment(kWidth1 + cell * kWidth2, kWidth2) = acc / static_cast<double>(ch * cw);
        }
      }
    }
    return out;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id) {
  if (id == "pixel") return std::make_unique<PixelExtractor>();
  static const std::regex randconv(R"(randconv\((\d+)\))");
  std::smatch m;
  if (std::regex_match(id, m, randconv)) return std::make_unique<RandConvExtractor>(std::stoull(m[1].str()));
  throw InvalidInput("unknown feature extractor '" + id + "'");
}

GaussianStats feature_stats(const FeatureExtractor& extractor, std::span<const ImageTensor> images) {
  return gaussian_stats(extractor.extract(images));
}

}  // namespace bcm
