#include "wavegan/losses.hpp"

#include "wavegan/haar.hpp"

namespace wavegan {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": input shapes differ");
}

}  // namespace

torch::Tensor frequency_l1(const torch::Tensor& x, const torch::Tensor& x_hat) {
  require_same_shape(x, x_hat, "frequency_l1");
  const auto a = haar_decompose(x);
  const auto b = haar_decompose(x_hat);
  return (a.ll - b.ll).abs().mean() + (a.lh - b.lh).abs().mean() + (a.hl - b.hl).abs().mean() +
         (a.hh - b.hh).abs().mean();
}

torch::Tensor local_reconstruction(const torch::Tensor& x_hat, const torch::Tensor& target) {
  require_same_shape(x_hat, target, "local_reconstruction");
  return (x_hat - target).abs().mean();
}

torch::Tensor hinge_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return torch::relu(1.0 - real_scores).mean() + torch::relu(1.0 + fake_scores).mean();
}

torch::Tensor hinge_g(const torch::Tensor& fake_scores) { return -fake_scores.mean(); }

torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2 || labels.dim() != 1 || labels.size(0) != logits.size(0)) {
    throw ShapeError("classification_loss: expected logits (N, C) and labels (N)");
  }
  if (labels.numel() > 0) {
    const auto lo = labels.min().item<int64_t>();
    const auto hi = labels.max().item<int64_t>();
    if (lo < 0 || hi >= logits.size(1)) {
      throw std::out_of_range("classification_loss: label outside [0, " + std::to_string(logits.size(1)) + ")");
    }
  }
  return torch::nll_loss(torch::log_softmax(logits, 1), labels);
}

// Totals are accumulated in double so they recombine exactly from the parts.
torch::Tensor total_g(const GeneratorLossParts& p, const LossWeights& w) {
  auto d = [](const torch::Tensor& t) { return t.to(torch::kFloat64); };
  return d(p.adv) + w.lambda_cls_g * d(p.cls) + w.lambda_fre * d(p.fre) + w.lambda_rec * d(p.rec);
}

torch::Tensor total_d(const DiscriminatorLossParts& p, const LossWeights& w) {
  return p.adv.to(torch::kFloat64) + w.lambda_cls_d * p.cls.to(torch::kFloat64);
}

double total_g(double adv, double cls, double fre, double rec, const LossWeights& w) {
  return adv + w.lambda_cls_g * cls + w.lambda_fre * fre + w.lambda_rec * rec;
}

double total_d(double adv, double cls, const LossWeights& w) { return adv + w.lambda_cls_d * cls; }

}  // namespace wavegan
