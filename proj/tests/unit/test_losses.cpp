#include <doctest.h>

#include "oracles.hpp"
#include "wavegan/haar.hpp"
#include "wavegan/losses.hpp"

using namespace wavegan;

TEST_CASE("frequency L1 oracle and properties") {
  torch::manual_seed(1);
  for (int i = 0; i < 20; ++i) {
    auto x = torch::rand({2, 3, 8, 8}) * 2 - 1;
    auto y = torch::rand({2, 3, 8, 8}) * 2 - 1;
    CHECK(frequency_l1(x, y).item<double>() == doctest::Approx(oracle::frequency_l1(x, y)).epsilon(1e-6));
  }
  auto x = torch::rand({1, 3, 4, 4});
  CHECK(frequency_l1(x, x).item<double>() == 0.0);
  CHECK_THROWS_AS(frequency_l1(x, torch::rand({1, 3, 4, 6})), ShapeError);
}

TEST_CASE("frequency L1 of a constant offset lives in LL only") {
  auto x = torch::zeros({1, 1, 4, 4}, torch::kFloat64);
  auto y = x + 0.5;
  // LL of a constant c is 2c; detail bands vanish.
  CHECK(frequency_l1(x, y).item<double>() == doctest::Approx(1.0));
}

TEST_CASE("frequency L1 gradient matches finite differences") {
  torch::manual_seed(4);
  auto x = torch::rand({1, 2, 4, 4}, torch::kFloat64);
  auto y = torch::rand({1, 2, 4, 4}, torch::kFloat64).requires_grad_(true);
  frequency_l1(x, y).backward();
  auto grad = y.grad().clone();
  auto data = y.detach().clone();
  for (int64_t i = 0; i < data.numel(); ++i) {
    const double numeric =
        oracle::central_difference([&] { return frequency_l1(x, data).item<double>(); }, data, i);
    CHECK(oracle::relative_error(grad.view({-1})[i].item<double>(), numeric) < 1e-3);
  }
}

TEST_CASE("reconstruction and hinge oracles") {
  torch::manual_seed(2);
  for (int i = 0; i < 20; ++i) {
    auto a = torch::randn({3, 3, 4, 4});
    auto b = torch::randn({3, 3, 4, 4});
    CHECK(local_reconstruction(a, b).item<double>() == doctest::Approx(oracle::mean_abs_diff(a, b)).epsilon(1e-6));
    auto real = torch::randn({6}) * 2;
    auto fake = torch::randn({4}) * 2;
    CHECK(hinge_d(real, fake).item<double>() == doctest::Approx(oracle::hinge_d(real, fake)).epsilon(1e-6));
    CHECK(hinge_g(fake).item<double>() == doctest::Approx(oracle::hinge_g(fake)).epsilon(1e-6));
  }
  // Confident, correct scores give zero discriminator loss.
  CHECK(hinge_d(torch::full({3}, 2.0), torch::full({3}, -2.0)).item<double>() == 0.0);
  CHECK(hinge_d(torch::zeros({3}), torch::zeros({3})).item<double>() == 2.0);
}

TEST_CASE("classification loss oracle and label checks") {
  torch::manual_seed(3);
  for (int i = 0; i < 20; ++i) {
    auto logits = torch::randn({5, 4}) * 3;
    std::vector<int64_t> labels{0, 3, 1, 2, 3};
    auto got = classification_loss(logits, torch::tensor(labels, torch::kLong)).item<double>();
    CHECK(got == doctest::Approx(oracle::cross_entropy(logits, labels)).epsilon(1e-6));
  }
  auto uniform = torch::zeros({2, 5});
  CHECK(classification_loss(uniform, torch::tensor({0, 4}, torch::kLong)).item<double>() ==
        doctest::Approx(std::log(5.0)));
  CHECK_THROWS_AS(classification_loss(uniform, torch::tensor({0, 5}, torch::kLong)), std::out_of_range);
  CHECK_THROWS_AS(classification_loss(uniform, torch::tensor({-1, 0}, torch::kLong)), std::out_of_range);
  CHECK_THROWS_AS(classification_loss(uniform, torch::tensor({0}, torch::kLong)), ShapeError);
}

TEST_CASE("weighted totals") {
  LossWeights w;
  w.lambda_cls_g = 0.5;
  w.lambda_fre = 2.0;
  w.lambda_rec = 3.0;
  w.lambda_cls_d = 0.25;
  GeneratorLossParts g{torch::tensor(1.5f), torch::tensor(0.2f), torch::tensor(0.1f), torch::tensor(0.05f)};
  const double want = 1.5f + 0.5 * 0.2f + 2.0 * 0.1f + 3.0 * 0.05f;
  CHECK(total_g(g, w).item<double>() == doctest::Approx(want).epsilon(1e-12));
  CHECK(total_g(1.5f, 0.2f, 0.1f, 0.05f, w) == doctest::Approx(want).epsilon(1e-12));
  DiscriminatorLossParts d{torch::tensor(1.0f), torch::tensor(2.0f)};
  CHECK(total_d(d, w).item<double>() == 1.5);
  CHECK(total_d(1.0, 2.0, w) == 1.5);
}
