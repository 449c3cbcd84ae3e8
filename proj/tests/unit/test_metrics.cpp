#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "wavegan/metrics.hpp"

using namespace wavegan;

namespace {

// sqrt of a matrix with positive real spectrum by Denman-Beavers iteration.
Eigen::MatrixXd db_sqrt(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd y = a, z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < 100; ++i) {
    Eigen::MatrixXd y_next = 0.5 * (y + z.inverse());
    Eigen::MatrixXd z_next = 0.5 * (z + y.inverse());
    y = y_next;
    z = z_next;
  }
  return y;
}

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = g(rng);
  return m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("Frechet distance of diagonal Gaussians has a closed form") {
  GaussianFit a{Eigen::Vector3d(0, 1, 2), Eigen::Vector3d(1, 4, 9).asDiagonal()};
  GaussianFit b{Eigen::Vector3d(1, 1, 0), Eigen::Vector3d(4, 1, 1).asDiagonal()};
  // |mu|^2 = 1 + 0 + 4; trace terms (1+4-4) + (4+1-4) + (9+1-6).
  const double want = 5.0 + 1.0 + 1.0 + 4.0;
  auto r = frechet_distance(a, b);
  CHECK(r.distance == doctest::Approx(want).epsilon(1e-10));
  CHECK_FALSE(r.regularized);
}

TEST_CASE("Frechet distance matches an iterative matrix square root") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    GaussianFit a{Eigen::VectorXd::NullaryExpr(4, [&] { return g(rng); }), random_spd(4, rng)};
    GaussianFit b{Eigen::VectorXd::NullaryExpr(4, [&] { return g(rng); }), random_spd(4, rng)};
    const double want = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                        2.0 * db_sqrt(a.cov * b.cov).trace();
    CHECK(frechet_distance(a, b).distance == doctest::Approx(want).epsilon(1e-8));
    CHECK(std::abs(frechet_distance(a, b).distance - frechet_distance(b, a).distance) < 1e-6);
  }
}

TEST_CASE("Gaussian fit") {
  Eigen::MatrixXd s(4, 2);
  s << 1, 2, 3, 4, 5, 6, 7, 9;
  auto fit = fit_gaussian(s);
  CHECK(fit.mean(0) == doctest::Approx(4.0));
  CHECK(fit.mean(1) == doctest::Approx(5.25));
  CHECK(fit.cov(0, 0) == doctest::Approx(20.0 / 3.0));
  CHECK(fit.cov(0, 1) == doctest::Approx(fit.cov(1, 0)));
}

TEST_CASE("FID on images: identity, symmetry, regularisation") {
  torch::manual_seed(1);
  FeatureEmbedder embedder(7);
  auto a = torch::rand({40, 3, 16, 16}) * 2 - 1;
  auto b = torch::rand({40, 3, 16, 16}) * 0.5;
  auto self = compute_fid(a, a, embedder);
  CHECK(self.distance < 1e-6);
  CHECK(self.regularized);
  CHECK(std::abs(compute_fid(a, b, embedder).distance - compute_fid(b, a, embedder).distance) < 1e-6);
  CHECK(compute_fid(a, b, embedder).distance > compute_fid(a, a.flip({3}), embedder).distance);
  CHECK_THROWS_AS(compute_fid(a.narrow(0, 0, 0), b, embedder), std::invalid_argument);
}

TEST_CASE("embedder is deterministic in its seed") {
  auto x = torch::rand({3, 3, 16, 16});
  CHECK(torch::equal(FeatureEmbedder(3).embed(x), FeatureEmbedder(3).embed(x)));
  CHECK_FALSE(torch::equal(FeatureEmbedder(3).embed(x), FeatureEmbedder(4).embed(x)));
  CHECK(FeatureEmbedder(3).embed(x).size(1) == 16 + 32 + 64);
}

TEST_CASE("perceptual proxy matches brute force") {
  torch::manual_seed(2);
  FeatureEmbedder embedder(5);
  auto x = torch::rand({4, 3, 8, 8}) * 2 - 1;
  double want = 0.0;
  for (const auto& layer : embedder.layer_features(x)) {
    auto f = layer.to(torch::kFloat64);
    const auto P = f.size(2) * f.size(3);
    double pair_sum = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        double d = 0.0;
        for (int64_t y = 0; y < f.size(2); ++y)
          for (int64_t xx = 0; xx < f.size(3); ++xx) {
            auto u = f[i].select(1, y).select(1, xx);
            auto v = f[j].select(1, y).select(1, xx);
            const double nu = u.norm().item<double>(), nv = v.norm().item<double>();
            auto uu = nu > 0 ? u / nu : u;
            auto vv = nv > 0 ? v / nv : v;
            d += (uu - vv).pow(2).sum().item<double>();
          }
        pair_sum += d / P;
      }
    want += pair_sum / 6.0;
  }
  CHECK(compute_lpips_proxy(x, embedder) == doctest::Approx(want).epsilon(1e-9));
  CHECK(compute_lpips_proxy(x[0].unsqueeze(0).expand({3, 3, 8, 8}), embedder) == doctest::Approx(0.0));
  CHECK_THROWS_AS(compute_lpips_proxy(x.narrow(0, 0, 1), embedder), std::invalid_argument);
}
