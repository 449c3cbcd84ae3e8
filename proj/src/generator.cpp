#include "wavegan/generator.hpp"

#include <numeric>
#include <random>

namespace wavegan {

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels, int stride, double leaky_slope)
    : leaky_slope_(leaky_slope) {
  conv = register_module(
      "conv", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(in_channels, out_channels, 3).stride(stride).padding(1).bias(false)));
  norm = register_module("norm", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  return torch::leaky_relu(norm(conv(x)), leaky_slope_);
}

torch::Tensor exact_member_mean(const torch::Tensor& x, int64_t dim) {
  const auto K = x.size(dim);
  auto first = x.narrow(dim, 0, 1);
  if (K == 1) return first.squeeze(dim);
  auto offsets = (x - first).sum(dim, /*keepdim=*/true) / static_cast<double>(K);
  return (first + offsets).squeeze(dim);
}

FrequencyBands aggregate_bands_mean(std::span<const FrequencyBands> members) {
  if (members.empty()) throw EpisodeError("aggregate_bands_mean: no members");
  FrequencyBands out;
  for (auto b : {Band::LL, Band::LH, Band::HL, Band::HH}) {
    std::vector<torch::Tensor> parts;
    parts.reserve(members.size());
    for (const auto& m : members) {
      if (m[b].sizes() != members.front()[b].sizes()) {
        throw ShapeError("aggregate_bands_mean: member band shapes differ");
      }
      parts.push_back(m[b]);
    }
    out[b] = exact_member_mean(torch::stack(parts, 0), 0);
  }
  return out;
}

FrequencyBands aggregate_bands_base(std::span<const FrequencyBands> members, const FusionPlan& plan) {
  if (plan.base_index < 0 || plan.base_index >= static_cast<int>(members.size())) {
    throw EpisodeError("aggregate_bands_base: base index " + std::to_string(plan.base_index) +
                       " out of range for " + std::to_string(members.size()) + " members");
  }
  return members[plan.base_index];
}

std::vector<FusionPlan> make_fusion_plans(int64_t episodes, int shots, std::uint64_t seed,
                                          const FusionOptions& options) {
  std::mt19937_64 rng(seed);
  std::vector<FusionPlan> plans;
  plans.reserve(episodes);
  for (int64_t e = 0; e < episodes; ++e) plans.push_back(make_fusion_plan(shots, rng(), options));
  return plans;
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.channels;
  const double slope = config_.leaky_slope;

  for (int i = 0; i < 5; ++i) {
    const int in = i == 0 ? config_.in_channels : ch[i - 1];
    encoder.push_back(register_module("enc" + std::to_string(i), ConvBlock(in, ch[i], i == 0 ? 1 : 2, slope)));
  }
  for (int i = 0; i < 4; ++i) {
    if (ch[i] == ch[i + 1]) {
      ll_projection.emplace_back(nullptr);
      continue;
    }
    ll_projection.push_back(register_module(
        "ll_proj" + std::to_string(i),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[i], ch[i + 1], 1).bias(false))));
  }
  for (int j = 0; j < 4; ++j) {
    decoder.push_back(register_module("dec" + std::to_string(j), ConvBlock(ch[4 - j], ch[3 - j], 1, slope)));
  }
  output = register_module(
      "out", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[0], config_.in_channels, 3).padding(1)));
}

EncoderTrace GeneratorImpl::encode(const torch::Tensor& episodes, std::vector<FusionPlan> plans) {
  if (episodes.dim() != 5 || episodes.size(2) != config_.in_channels ||
      episodes.size(3) != config_.image_size || episodes.size(4) != config_.image_size) {
    throw ShapeError("generator: expected episodes shaped (B, K, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.image_size) + ", " + std::to_string(config_.image_size) + ")");
  }
  EncoderTrace trace;
  trace.episodes = episodes.size(0);
  trace.shots = episodes.size(1);
  if (static_cast<int64_t>(plans.size()) != trace.episodes) {
    throw EpisodeError("generator: need one fusion plan per episode");
  }

  auto x = episodes.reshape({trace.episodes * trace.shots, episodes.size(2), episodes.size(3), episodes.size(4)});
  torch::Tensor feature = encoder[0](x);
  for (int i = 0; i < 5; ++i) {
    if (i > 0) {
      auto next = encoder[i](feature);
      if (config_.use_ll_skip) {
        auto ll = trace.bands[i - 1].ll;
        if (!ll_projection[i - 1].is_empty()) ll = ll_projection[i - 1](ll);
        next = next + ll;
      }
      feature = next;
    }
    trace.features.push_back(feature);
    if (i < 4) trace.bands.push_back(haar_decompose(feature));
  }

  const auto& last = trace.features.back();
  auto grouped = last.view({trace.episodes, trace.shots, last.size(1), last.size(2), last.size(3)});
  std::vector<torch::Tensor> fused;
  fused.reserve(trace.episodes);
  for (int64_t e = 0; e < trace.episodes; ++e) {
    auto& plan = plans[e];
    if (config_.use_lof) {
      fused.push_back(fuse_local(grouped[e], plan));
      continue;
    }
    // Without fusion the base feature passes through unchanged and the image
    // target degenerates to the base image.
    if (plan.shots() != trace.shots || plan.base_index < 0 || plan.base_index >= trace.shots) {
      throw EpisodeError("generator: fusion plan does not match the episode");
    }
    std::fill(plan.alpha.begin(), plan.alpha.end(), 0.0);
    plan.alpha[plan.base_index] = 1.0;
    plan.feature_height = static_cast<int>(last.size(2));
    plan.feature_width = static_cast<int>(last.size(3));
    plan.replaced_positions.resize(last.size(2) * last.size(3));
    std::iota(plan.replaced_positions.begin(), plan.replaced_positions.end(), 0);
    fused.push_back(grouped[e][plan.base_index]);
  }
  trace.bottleneck = torch::stack(fused, 0);
  trace.plans = std::move(plans);
  return trace;
}

FrequencyBands GeneratorImpl::aggregate_level(const FrequencyBands& level, const EncoderTrace& trace,
                                              Variant variant) const {
  FrequencyBands out;
  for (auto b : {Band::LH, Band::HL, Band::HH}) {
    const auto& t = level[b];
    auto grouped = t.view({trace.episodes, trace.shots, t.size(1), t.size(2), t.size(3)});
    if (variant == Variant::Mean) {
      out[b] = exact_member_mean(grouped, 1);
    } else {
      std::vector<int64_t> base;
      for (const auto& p : trace.plans) base.push_back(p.base_index);
      auto idx = torch::tensor(base, torch::kLong);
      out[b] = grouped.index({torch::arange(trace.episodes), idx});
    }
  }
  out.ll = torch::zeros_like(out.lh);
  return out;
}

torch::Tensor GeneratorImpl::decode(const EncoderTrace& trace, std::optional<Variant> variant) {
  const Variant v = variant.value_or(config_.variant);
  if (config_.use_hf_skip && v == Variant::BaseIndex &&
      static_cast<int64_t>(trace.plans.size()) != trace.episodes) {
    throw ConfigError("generator: base-index aggregation needs a fusion plan per episode");
  }
  const auto mask = config_.hf_band_mask.without(Band::LL);

  torch::Tensor f = trace.bottleneck;
  for (int j = 0; j < 4; ++j) {
    f = torch::nn::functional::interpolate(
        f, torch::nn::functional::InterpolateFuncOptions()
               .scale_factor(std::vector<double>{2.0, 2.0})
               .mode(torch::kNearest));
    f = decoder[j](f);
    if (config_.use_hf_skip) {
      // Encoder level 3 - j has the same width and resolution as this output.
      auto hf = aggregate_level(trace.bands[3 - j], trace, v);
      f = f + partial_reconstruct(hf, mask);
    }
  }
  return torch::tanh(output(f));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& episodes, std::vector<FusionPlan>& plans,
                                     std::optional<Variant> variant) {
  auto trace = encode(episodes, plans);
  plans = trace.plans;
  return decode(trace, variant);
}

}  // namespace wavegan
