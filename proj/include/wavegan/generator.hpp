#pragma once

#include <optional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "wavegan/config.hpp"
#include "wavegan/haar.hpp"
#include "wavegan/local_fusion.hpp"

namespace wavegan {

/// conv3x3 -> batch norm -> leaky ReLU.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int in_channels, int out_channels, int stride, double leaky_slope);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};

 private:
  double leaky_slope_;
};
TORCH_MODULE(ConvBlock);

/// Everything the encoder produces for a batch of episodes.
struct EncoderTrace {
  int64_t episodes = 0;
  int64_t shots = 0;
  /// Skip-connected encoder features E_1..E_5, each (episodes * shots, C, s, s).
  std::vector<torch::Tensor> features;
  /// Haar bands of E_1..E_4.
  std::vector<FrequencyBands> bands;
  /// Fused bottleneck, (episodes, C, s, s).
  torch::Tensor bottleneck;
  /// One plan per episode, with replaced positions recorded.
  std::vector<FusionPlan> plans;
};

/// Elementwise mean over the members; exact when all members are equal.
FrequencyBands aggregate_bands_mean(std::span<const FrequencyBands> members);

/// The band set of the plan's base member, untouched.
FrequencyBands aggregate_bands_base(std::span<const FrequencyBands> members, const FusionPlan& plan);

/// Mean over `dim`, computed as first + sum(x_k - first) / K so duplicated
/// members reproduce the first member bit for bit.
torch::Tensor exact_member_mean(const torch::Tensor& x, int64_t dim);

/// One plan per episode, seeds derived from `seed`.
std::vector<FusionPlan> make_fusion_plans(int64_t episodes, int shots, std::uint64_t seed,
                                          const FusionOptions& options);

/// Wavelet encoder/decoder generator.  Input is a batch of episodes shaped
/// (episodes, shots, C, S, S); output is one image per episode.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  EncoderTrace encode(const torch::Tensor& episodes, std::vector<FusionPlan> plans);
  torch::Tensor decode(const EncoderTrace& trace, std::optional<Variant> variant = std::nullopt);
  torch::Tensor forward(const torch::Tensor& episodes, std::vector<FusionPlan>& plans,
                        std::optional<Variant> variant = std::nullopt);

  const GeneratorConfig& config() const { return config_; }

  std::vector<ConvBlock> encoder;
  /// 1x1 projections aligning LL_i channels with block i+1; null when widths match.
  std::vector<torch::nn::Conv2d> ll_projection;
  std::vector<ConvBlock> decoder;
  torch::nn::Conv2d output{nullptr};

 private:
  FrequencyBands aggregate_level(const FrequencyBands& level, const EncoderTrace& trace, Variant variant) const;

  GeneratorConfig config_;
};
TORCH_MODULE(Generator);

}  // namespace wavegan
