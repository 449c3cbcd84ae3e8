#include "wavegan/discriminator.hpp"

namespace wavegan {

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, double leaky_slope)
    : leaky_slope_(leaky_slope) {
  conv1 = register_module("conv1",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
  conv2 = register_module("conv2",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
  if (in_channels != out_channels) {
    shortcut = register_module(
        "shortcut", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1).bias(false)));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1(torch::leaky_relu(x, leaky_slope_));
  h = conv2(torch::leaky_relu(h, leaky_slope_));
  auto s = shortcut.is_empty() ? x : shortcut(x);
  return torch::avg_pool2d(h + s, 2);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config, int image_size, int in_channels, int num_classes)
    : config_(std::move(config)), image_size_(image_size), in_channels_(in_channels), num_classes_(num_classes) {
  config_.validate();
  if (num_classes < 1) throw ConfigError("discriminator needs at least one class");
  if (image_size < 16) throw ConfigError("discriminator image size must be >= 16");
  const auto& ch = config_.channels;
  stem = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, ch[0], 3).padding(1)));
  for (int i = 0; i < 4; ++i) {
    blocks.push_back(
        register_module("block" + std::to_string(i), ResidualBlock(ch[i], ch[i + 1], config_.leaky_slope)));
  }
  adv_head = register_module("adv", torch::nn::Linear(ch[4], 1));
  cls_head = register_module("cls", torch::nn::Linear(ch[4], num_classes));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != in_channels_ || images.size(2) != image_size_ ||
      images.size(3) != image_size_) {
    throw ShapeError("discriminator: expected images shaped (N, " + std::to_string(in_channels_) + ", " +
                     std::to_string(image_size_) + ", " + std::to_string(image_size_) + ")");
  }
  auto h = stem(images);
  for (auto& block : blocks) h = block(h);
  h = torch::leaky_relu(h, config_.leaky_slope).mean({2, 3});
  return {adv_head(h).squeeze(1), cls_head(h)};
}

}  // namespace wavegan
