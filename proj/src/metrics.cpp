#include "wavegan/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace wavegan {

namespace {

constexpr int kWidths[] = {16, 32, 64};
constexpr int64_t kEmbedBatch = 64;

}  // namespace

FeatureEmbedder::FeatureEmbedder(std::uint64_t seed, int in_channels) : seed_(seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  int in = in_channels;
  for (int out : kWidths) {
    const double std = std::sqrt(2.0 / (in * 9));
    weights_.push_back(torch::randn({out, in, 3, 3}, gen, torch::kFloat32) * std);
    biases_.push_back(torch::randn({out}, gen, torch::kFloat32) * 0.1);
    in = out;
  }
}

std::vector<torch::Tensor> FeatureEmbedder::layer_features(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  auto h = images.to(torch::kFloat32);
  for (size_t i = 0; i < weights_.size(); ++i) {
    if (i > 0) h = torch::avg_pool2d(h, 2);
    h = torch::relu(torch::conv2d(h, weights_[i], biases_[i], 1, 1));
    out.push_back(h);
  }
  return out;
}

torch::Tensor FeatureEmbedder::embed(const torch::Tensor& images) const {
  std::vector<torch::Tensor> chunks;
  for (int64_t start = 0; start < images.size(0); start += kEmbedBatch) {
    auto layers = layer_features(images.narrow(0, start, std::min(kEmbedBatch, images.size(0) - start)));
    std::vector<torch::Tensor> pooled;
    for (const auto& l : layers) pooled.push_back(l.mean({2, 3}));
    chunks.push_back(torch::cat(pooled, 1));
  }
  return torch::cat(chunks, 0).to(torch::kFloat64);
}

Eigen::MatrixXd to_eigen(const torch::Tensor& rows) {
  auto t = rows.detach().to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(t.size(0), t.size(1));
  auto acc = t.accessor<double, 2>();
  for (int64_t i = 0; i < t.size(0); ++i) {
    for (int64_t j = 0; j < t.size(1); ++j) m(i, j) = acc[i][j];
  }
  return m;
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("fit_gaussian: no samples");
  GaussianFit fit;
  fit.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - fit.mean.transpose();
  const double denom = samples.rows() > 1 ? static_cast<double>(samples.rows() - 1) : 1.0;
  fit.cov = (centered.transpose() * centered) / denom;
  return fit;
}

FrechetResult frechet_distance(const GaussianFit& a, const GaussianFit& b, double epsilon) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const auto n = a.mean.size();
  FrechetResult r;
  Eigen::MatrixXd sa = a.cov, sb = b.cov;

  auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  };
  if (min_eig(sa) <= epsilon * 1e-3 || min_eig(sb) <= epsilon * 1e-3) {
    sa += epsilon * Eigen::MatrixXd::Identity(n, n);
    sb += epsilon * Eigen::MatrixXd::Identity(n, n);
    r.regularized = true;
    r.epsilon = epsilon;
  }

  // Tr((S_a S_b)^(1/2)) = Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), the inner matrix being symmetric PSD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
  const Eigen::VectorXd root_vals = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root_a = ea.eigenvectors() * root_vals.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (a.mean - b.mean).squaredNorm();
  r.distance = std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt);
  return r;
}

FrechetResult compute_fid(const torch::Tensor& set_a, const torch::Tensor& set_b, const FeatureEmbedder& embedder) {
  if (set_a.size(0) < 1 || set_b.size(0) < 1) throw std::invalid_argument("compute_fid: empty image set");
  return frechet_distance(fit_gaussian(to_eigen(embedder.embed(set_a))),
                          fit_gaussian(to_eigen(embedder.embed(set_b))));
}

double compute_lpips_proxy(const torch::Tensor& set, const FeatureEmbedder& embedder) {
  const auto N = set.size(0);
  if (N < 2) throw std::invalid_argument("compute_lpips_proxy: needs at least two images");
  auto total = torch::zeros({N, N}, torch::kFloat64);
  for (const auto& layer : embedder.layer_features(set)) {
    auto f = layer.to(torch::kFloat64);
    const auto P = f.size(2) * f.size(3);
    auto norm = f.norm(2, 1, /*keepdim=*/true);
    f = torch::where(norm > 0, f / norm.clamp_min(1e-30), torch::zeros_like(f)).reshape({N, -1});
    auto gram = torch::matmul(f, f.t());
    auto sq = gram.diagonal();
    // ||a - b||^2 summed over locations, then averaged over locations.
    total += (sq.unsqueeze(1) + sq.unsqueeze(0) - 2.0 * gram) / static_cast<double>(P);
  }
  auto upper = torch::triu(total, 1);
  return upper.sum().item<double>() / (static_cast<double>(N) * (N - 1) / 2.0);
}

}  // namespace wavegan
