#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavegan/haar.hpp"
#include "wavegan/local_fusion.hpp"

namespace wavegan {

inline constexpr int kConfigVersion = 1;

enum class Variant { Mean, BaseIndex };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct GeneratorConfig {
  int image_size = 32;
  int in_channels = 3;
  /// Widths of the five encoder blocks; the decoder mirrors them.
  std::vector<int> channels{32, 64, 128, 128, 128};
  Variant variant = Variant::BaseIndex;
  bool use_ll_skip = true;
  bool use_hf_skip = true;
  bool use_lof = true;
  BandMask hf_band_mask = BandMask::detail();
  FusionOptions fusion{};
  double leaky_slope = 0.2;

  void validate() const;
};

struct DiscriminatorConfig {
  /// Stem width followed by the widths of the four residual blocks.
  std::vector<int> channels{32, 64, 128, 256, 256};
  double leaky_slope = 0.2;

  void validate() const;
};

struct LossWeights {
  double lambda_cls_g = 1.0;
  double lambda_cls_d = 1.0;
  double lambda_fre = 1.0;
  double lambda_rec = 1.0;

  void validate() const;
};

struct TrainConfig {
  int64_t iterations = 100000;
  int batch_episodes = 8;
  int shots = 3;
  double lr = 1e-4;
  /// Negative means iterations / 2.
  int64_t decay_start_iteration = -1;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  int64_t checkpoint_interval = 10000;

  int64_t decay_start() const { return decay_start_iteration < 0 ? iterations / 2 : decay_start_iteration; }
  void validate() const;
};

struct DataConfig {
  std::string root;
  std::string manifest;
  int seen_classes = 85;
  int unseen_classes = 17;
  double support_fraction = 0.25;
  std::uint64_t split_seed = 0;
};

struct EvalConfig {
  int images_per_class = 128;
  /// Shots used at generation time; <= 0 means the training shots.
  int shots = 0;
  std::uint64_t seed = 0;
  std::uint64_t embedder_seed = 1234;
  std::vector<int> sweep_shots{2, 3, 5, 7, 9};
  /// Augmentation-classification split sizes per unseen class.
  int cls_train = 10;
  int cls_val = 15;
  int cls_test = 15;
  int cls_augment = 30;
  int cls_epochs = 30;
};

struct ModelConfig {
  int version = kConfigVersion;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossWeights loss;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  void validate() const;
  int eval_shots() const { return eval.shots > 0 ? eval.shots : train.shots; }
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Strict: unknown keys and type mismatches raise ConfigError.
ModelConfig config_from_json(const nlohmann::json& j);

ModelConfig load_config(const std::filesystem::path& path);
void save_config(const ModelConfig& cfg, const std::filesystem::path& path);

/// Applies "section.key=value" overrides.  The value is parsed as JSON when
/// possible and as a plain string otherwise.
ModelConfig apply_overrides(const ModelConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace wavegan
