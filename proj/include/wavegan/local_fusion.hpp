#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <torch/torch.h>

namespace wavegan {

/// Raised for malformed K-shot episodes (too few shots, bad indices).
class EpisodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FusionOptions {
  /// Fraction of base-feature locations that get replaced, in (0, 1].
  double fused_fraction = 1.0;
  /// Number of most-similar reference vectors averaged per reference feature.
  int top_n = 1;
};

/// Base index and fusion weights for one episode.  `replaced_positions` is
/// filled in by fuse_local once the feature resolution is known.
struct FusionPlan {
  int base_index = 0;
  std::vector<double> alpha;
  double fused_fraction = 1.0;
  int top_n = 1;
  std::uint64_t position_seed = 0;

  int feature_height = 0;
  int feature_width = 0;
  /// Row-major flat indices (y * feature_width + x), ascending.
  std::vector<int64_t> replaced_positions;

  int shots() const { return static_cast<int>(alpha.size()); }
  bool has_positions() const { return feature_height > 0 && feature_width > 0; }
};

/// Uniform base index, alpha ~ flat Dirichlet.  Deterministic in `seed`.
FusionPlan make_fusion_plan(int shots, std::uint64_t seed, const FusionOptions& options = {});

/// Cosine similarity between every base location and every location of each
/// reference.  base: (C, h, w); refs: (R, C, h, w) -> (R, h*w, h*w) where
/// entry [r][p][q] compares base location p with reference location q.
/// Zero-norm vectors get similarity 0.
torch::Tensor similarity_map(const torch::Tensor& base, const torch::Tensor& refs);

/// Local fusion of one episode's features (K, C, h, w) -> (C, h, w).
/// Records replaced_positions in `plan`.
torch::Tensor fuse_local(const torch::Tensor& features, FusionPlan& plan);

/// Image-level fusion target (K, C, H, W) -> (C, H, W): the base image with
/// the plan's replaced positions, upscaled nearest-neighbour, blended by alpha.
torch::Tensor fuse_images(const torch::Tensor& images, const FusionPlan& plan);

/// Boolean (h, w) mask of the plan's replaced positions.
torch::Tensor replaced_mask(const FusionPlan& plan);

}  // namespace wavegan
