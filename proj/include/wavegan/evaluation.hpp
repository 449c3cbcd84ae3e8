#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "wavegan/config.hpp"
#include "wavegan/data_io.hpp"
#include "wavegan/generator.hpp"
#include "wavegan/metrics.hpp"

namespace wavegan {

struct GenerationProvenance {
  std::string checkpoint;
  std::uint64_t seed = 0;
  Variant variant = Variant::BaseIndex;
  int shots = 0;
};

/// N generated images per unseen class.
struct GenerationSet {
  GenerationProvenance provenance;
  int images_per_class = 0;
  std::map<std::string, torch::Tensor> images;  // class -> (N, C, H, W)
  std::vector<std::string> skipped;
};

/// Samples `shots`-image support episodes from every class of `support` and
/// generates until each class has `images_per_class` images.  Classes with
/// fewer than `shots` support images are skipped with a warning.
GenerationSet generate_set(Generator& generator, const ImageDataset& support, int shots, int images_per_class,
                           std::uint64_t seed, std::optional<Variant> variant = std::nullopt);

/// Writes every image as {dir}/{class}/{index}.png.
void save_generation_set(const GenerationSet& set, const std::filesystem::path& dir);

struct ClassScore {
  double fid = 0.0;
  double lpips_proxy = 0.0;
};

struct EvaluationReport {
  Variant variant = Variant::BaseIndex;
  int shots = 0;
  double fid = 0.0;
  double lpips_proxy = 0.0;
  bool regularized = false;
  std::map<std::string, ClassScore> per_class;

  nlohmann::json to_json() const;
};

/// Pooled FID between all generated and all query images; LPIPS-proxy is the
/// mean within-class diversity of the generated images.
EvaluationReport evaluate_set(const GenerationSet& set, const ImageDataset& query, const FeatureEmbedder& embedder);

/// metrics.csv (one row per class plus "all") and summary.json.
void write_evaluation(const EvaluationReport& report, const std::filesystem::path& dir);

struct BandVisualization {
  /// (3, rows * h, 5 * w) grid in [-1, 1]; columns LL, LH, HL, HH, LH+HL+HH.
  torch::Tensor grid;
  /// Raw band values per panel, each (N, 3, h, w).
  std::vector<torch::Tensor> panels;
  nlohmann::json metadata;
};

BandVisualization visualize_bands(const torch::Tensor& images);

/// Writes grid.png and grid.json into `dir`.
BandVisualization write_band_visualization(const torch::Tensor& images, const std::filesystem::path& dir);

struct SweepRow {
  Variant variant = Variant::BaseIndex;
  int shots = 0;
  double fid = 0.0;
  double lpips_proxy = 0.0;
  /// Mean and base-index outputs agreed exactly on a duplicated episode.
  bool duplicate_equal = false;
  std::string error;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  /// Variance of base-index FID across K and least-squares slope of mean FID against K.
  double base_fid_variance = 0.0;
  double mean_fid_slope = 0.0;

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
};

/// Runs `pipeline` for every K and variant; a throwing K is recorded with its
/// error and the sweep continues.
SweepTable shot_sweep(const std::vector<int>& shots, const std::function<SweepRow(int, Variant)>& pipeline);

/// Decodes a K-times duplicated episode with both aggregation variants and
/// reports whether the outputs are bitwise equal.
bool duplicated_episode_agrees(Generator& generator, const torch::Tensor& image, int shots, std::uint64_t seed);

struct AugmentOptions {
  int train_per_class = 10;
  int val_per_class = 15;
  int test_per_class = 15;
  int shots = 3;
  int epochs = 30;
  std::uint64_t seed = 0;
  /// Condition name -> number of extra images per class.  "base" adds none,
  /// "copies" duplicates training images, anything else uses the generator.
  std::vector<std::pair<std::string, int>> conditions{{"base", 0}, {"wavegan", 30}};
};

struct AugmentRow {
  std::string condition;
  std::string dataset;
  double accuracy = 0.0;
  int excluded_classes = 0;
};

/// Trains a small residual classifier on the unseen classes' train split with
/// and without augmentation and reports test accuracy (best validation epoch).
std::vector<AugmentRow> augment_classify(const ImageDataset& unseen, Generator& generator,
                                         const AugmentOptions& options, const std::string& dataset_name);

void write_augment_table(const std::vector<AugmentRow>& rows, const std::filesystem::path& path);

}  // namespace wavegan
