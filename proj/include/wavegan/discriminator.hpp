#pragma once

#include <torch/torch.h>

#include "wavegan/config.hpp"

namespace wavegan {

struct DiscriminatorOutput {
  torch::Tensor adv_score;     // (N)
  torch::Tensor class_logits;  // (N, num_classes)
};

/// Pre-activation residual block with 2x average-pool downsampling.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels, double leaky_slope);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::Conv2d shortcut{nullptr};

 private:
  double leaky_slope_;
};
TORCH_MODULE(ResidualBlock);

/// Stem conv, four residual blocks, then an adversarial head (no output
/// nonlinearity) and a class head over the seen classes.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(DiscriminatorConfig config, int image_size, int in_channels, int num_classes);

  DiscriminatorOutput forward(const torch::Tensor& images);

  int num_classes() const { return num_classes_; }
  const DiscriminatorConfig& config() const { return config_; }

  torch::nn::Conv2d stem{nullptr};
  std::vector<ResidualBlock> blocks;
  torch::nn::Linear adv_head{nullptr};
  torch::nn::Linear cls_head{nullptr};

 private:
  DiscriminatorConfig config_;
  int image_size_;
  int in_channels_;
  int num_classes_;
};
TORCH_MODULE(Discriminator);

}  // namespace wavegan
