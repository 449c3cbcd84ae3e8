#include "wavegan/local_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wavegan/haar.hpp"

namespace wavegan {

namespace {

void validate_plan(const FusionPlan& plan, int64_t shots) {
  if (shots < 2) throw EpisodeError("local fusion needs at least 2 shots, got " + std::to_string(shots));
  if (plan.shots() != shots) {
    throw EpisodeError("fusion plan has " + std::to_string(plan.shots()) + " weights for " +
                       std::to_string(shots) + " shots");
  }
  if (plan.base_index < 0 || plan.base_index >= shots) {
    throw EpisodeError("fusion plan base index " + std::to_string(plan.base_index) + " out of range");
  }
}

std::vector<int64_t> choose_positions(const FusionPlan& plan, int64_t count_total) {
  const auto wanted = std::clamp<int64_t>(
      static_cast<int64_t>(std::llround(plan.fused_fraction * static_cast<double>(count_total))), 1,
      count_total);
  std::vector<int64_t> positions(count_total);
  std::iota(positions.begin(), positions.end(), 0);
  if (wanted == count_total) return positions;
  std::mt19937_64 rng(plan.position_seed);
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(wanted);
  std::sort(positions.begin(), positions.end());
  return positions;
}

}  // namespace

FusionPlan make_fusion_plan(int shots, std::uint64_t seed, const FusionOptions& options) {
  if (shots < 2) throw EpisodeError("local fusion needs at least 2 shots, got " + std::to_string(shots));
  if (!(options.fused_fraction > 0.0 && options.fused_fraction <= 1.0)) {
    throw ConfigError("fused_fraction must lie in (0, 1]");
  }
  if (options.top_n < 1) throw ConfigError("top_n must be >= 1");

  std::mt19937_64 rng(seed);
  FusionPlan plan;
  plan.base_index = std::uniform_int_distribution<int>(0, shots - 1)(rng);
  // Normalised unit exponentials are uniform on the simplex.
  std::exponential_distribution<double> expo(1.0);
  plan.alpha.resize(shots);
  for (auto& a : plan.alpha) a = expo(rng);
  const double total = std::accumulate(plan.alpha.begin(), plan.alpha.end(), 0.0);
  for (auto& a : plan.alpha) a /= total;
  plan.fused_fraction = options.fused_fraction;
  plan.top_n = options.top_n;
  plan.position_seed = rng();
  return plan;
}

torch::Tensor similarity_map(const torch::Tensor& base, const torch::Tensor& refs) {
  if (base.dim() != 3 || refs.dim() != 4) {
    throw ShapeError("similarity_map: expected base (C, h, w) and refs (R, C, h, w)");
  }
  if (base.size(0) != refs.size(1)) throw ShapeError("similarity_map: channel counts differ");
  const auto C = base.size(0);
  const auto R = refs.size(0);
  auto unit = [](const torch::Tensor& v, int64_t dim) {
    auto norm = v.norm(2, dim, /*keepdim=*/true);
    // Zero vectors stay zero, so their dot products (similarities) are 0.
    return torch::where(norm > 0, v / norm.clamp_min(1e-30), torch::zeros_like(v));
  };
  auto b = unit(base.reshape({C, -1}), 0);          // (C, P)
  auto r = unit(refs.reshape({R, C, -1}), 1);       // (R, C, Q)
  auto sim = torch::matmul(b.t().unsqueeze(0), r);  // (R, P, Q)
  return sim.clamp(-1.0, 1.0);
}

torch::Tensor fuse_local(const torch::Tensor& features, FusionPlan& plan) {
  if (features.dim() != 4) throw ShapeError("fuse_local: expected (K, C, h, w) features");
  const auto K = features.size(0), C = features.size(1), h = features.size(2), w = features.size(3);
  validate_plan(plan, K);
  const auto P = h * w;

  std::vector<int64_t> ref_ids;
  for (int64_t k = 0; k < K; ++k) {
    if (k != plan.base_index) ref_ids.push_back(k);
  }
  auto base = features[plan.base_index];
  auto refs = features.index_select(0, torch::tensor(ref_ids, torch::kLong));
  const auto R = static_cast<int64_t>(ref_ids.size());
  const auto n = std::min<int64_t>(plan.top_n, P);

  auto sim = similarity_map(base.detach(), refs.detach());
  auto matches = std::get<1>(sim.topk(n, /*dim=*/2));  // (R, P, n)

  auto base_flat = base.reshape({C, P});
  auto refs_flat = refs.reshape({R, C, P});
  auto fused = base_flat * plan.alpha[plan.base_index];
  for (int64_t r = 0; r < R; ++r) {
    auto idx = matches[r].reshape({-1});
    auto picked = refs_flat[r].index_select(1, idx).view({C, P, n}).mean(2);
    fused = fused + picked * plan.alpha[ref_ids[r]];
  }

  plan.feature_height = static_cast<int>(h);
  plan.feature_width = static_cast<int>(w);
  plan.replaced_positions = choose_positions(plan, P);

  auto mask = replaced_mask(plan).to(features.device()).reshape({1, P});
  return torch::where(mask, fused, base_flat).view({C, h, w});
}

torch::Tensor replaced_mask(const FusionPlan& plan) {
  if (!plan.has_positions()) throw EpisodeError("fusion plan has no recorded positions");
  auto mask = torch::zeros({static_cast<int64_t>(plan.feature_height) * plan.feature_width}, torch::kBool);
  if (!plan.replaced_positions.empty()) {
    mask.index_fill_(0, torch::tensor(plan.replaced_positions, torch::kLong), true);
  }
  return mask.view({plan.feature_height, plan.feature_width});
}

torch::Tensor fuse_images(const torch::Tensor& images, const FusionPlan& plan) {
  if (images.dim() != 4) throw ShapeError("fuse_images: expected (K, C, H, W) images");
  const auto K = images.size(0), H = images.size(2), W = images.size(3);
  validate_plan(plan, K);
  if (!plan.has_positions()) throw EpisodeError("fuse_images: plan lacks replaced positions");
  if (H % plan.feature_height != 0 || W % plan.feature_width != 0) {
    throw ShapeError("fuse_images: image size is not a multiple of the feature size");
  }
  auto mask = replaced_mask(plan)
                  .repeat_interleave(H / plan.feature_height, 0)
                  .repeat_interleave(W / plan.feature_width, 1)
                  .to(images.device());
  auto alpha = torch::tensor(plan.alpha, torch::kFloat64).to(images.options()).view({K, 1, 1, 1});
  auto blended = (images * alpha).sum(0);
  return torch::where(mask.unsqueeze(0), blended, images[plan.base_index]);
}

}  // namespace wavegan
