#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bcm/image.hpp"

namespace bcm {

/// Mean squared pixel error after mapping [-1, 1] to [0, 1]. Throws EmptyInput
/// for no samples and InvalidInput on a shape mismatch.
double mse_specificity(std::span<const ImageTensor> samples, const ImageTensor& target);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows of `features`.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// ||m1 - m2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).
///
/// The trace of the product root is computed as the sum of square roots of
/// the eigenvalues of S1^(1/2) S2 S1^(1/2), which is symmetric, instead of a
/// general matrix square root of S1 S2 (non-symmetric, and prone to complex
/// round-off). Eigenvalues below zero from round-off are clipped.
/// Results in (-1e-6, 0) are clamped to 0; anything lower, or a covariance
/// with an eigenvalue below -1e-6 * scale, throws InvalidInput.
double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                        const Eigen::MatrixXd& s2);

inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

/// Maps images to fixed-length feature vectors, one row per image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual Eigen::MatrixXd extract(std::span<const ImageTensor> images) const = 0;
};

/// "pixel" or "randconv(<seed>)". Throws InvalidInput for anything else.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id);

/// Convenience: features through `extractor`, then gaussian_stats.
GaussianStats feature_stats(const FeatureExtractor& extractor, std::span<const ImageTensor> images);

struct MetricsReport {
  double fid = 0.0;
  double mse = 0.0;
  std::size_t n_fid_samples = 0;
  std::size_t n_mse_samples = 0;
  std::string extractor_id;
  std::string config_hash;
};

}  // namespace bcm
