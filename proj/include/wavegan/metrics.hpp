#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

namespace wavegan {

/// Small convolutional network with fixed, seeded random weights.  Stands in
/// for a pretrained perceptual embedder; distances computed with it are only
/// comparable between runs that share the seed.
class FeatureEmbedder {
 public:
  explicit FeatureEmbedder(std::uint64_t seed, int in_channels = 3);

  /// Activations of every layer for a (N, C, H, W) batch.
  std::vector<torch::Tensor> layer_features(const torch::Tensor& images) const;

  /// Concatenated global average of every layer, (N, D) double.
  torch::Tensor embed(const torch::Tensor& images) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows of `samples`.
GaussianFit fit_gaussian(const Eigen::MatrixXd& samples);
Eigen::MatrixXd to_eigen(const torch::Tensor& rows);

struct FrechetResult {
  double distance = 0.0;
  /// Set when a singular covariance was regularised with epsilon * I.
  bool regularized = false;
  double epsilon = 0.0;
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
FrechetResult frechet_distance(const GaussianFit& a, const GaussianFit& b, double epsilon = 1e-6);

/// Frechet distance between the embeddings of two image sets.
FrechetResult compute_fid(const torch::Tensor& set_a, const torch::Tensor& set_b, const FeatureEmbedder& embedder);

/// Mean pairwise distance between unit-normalised embedder activations,
/// averaged over locations and summed over layers ("perceptual-proxy").
/// Throws std::invalid_argument for fewer than two images.
double compute_lpips_proxy(const torch::Tensor& set, const FeatureEmbedder& embedder);

}  // namespace wavegan
