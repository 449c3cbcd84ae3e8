#pragma once

#include <torch/torch.h>

#include "wavegan/config.hpp"

namespace wavegan {

/// Sum over the four Haar bands of the mean absolute band difference.
torch::Tensor frequency_l1(const torch::Tensor& x, const torch::Tensor& x_hat);

/// Mean absolute error against the image-level fusion target.
torch::Tensor local_reconstruction(const torch::Tensor& x_hat, const torch::Tensor& target);

/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)).
torch::Tensor hinge_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// -mean(fake).
torch::Tensor hinge_g(const torch::Tensor& fake_scores);

/// Mean negative log softmax posterior of the true labels.  logits: (N, C),
/// labels: (N) int64 in [0, C).
torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels);

struct GeneratorLossParts {
  torch::Tensor adv;
  torch::Tensor cls;
  torch::Tensor fre;
  torch::Tensor rec;
};

struct DiscriminatorLossParts {
  torch::Tensor adv;
  torch::Tensor cls;
};

torch::Tensor total_g(const GeneratorLossParts& parts, const LossWeights& w);
torch::Tensor total_d(const DiscriminatorLossParts& parts, const LossWeights& w);

/// Scalar versions, used when recombining logged components.
double total_g(double adv, double cls, double fre, double rec, const LossWeights& w);
double total_d(double adv, double cls, const LossWeights& w);

}  // namespace wavegan
