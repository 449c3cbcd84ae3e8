#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wavegan/config.hpp"
#include "wavegan/data_io.hpp"
#include "wavegan/evaluation.hpp"
#include "wavegan/trainer.hpp"

namespace wavegan {

/// Manifest named by cfg.data.manifest, or a fresh seeded split of cfg.data.root.
SplitManifest resolve_manifest(const ModelConfig& cfg);

/// Generator restored from a checkpoint file or from the final checkpoint of a run directory.
Generator load_generator(const std::filesystem::path& checkpoint_or_run, ModelConfig* config_out = nullptr);

struct PipelineResult {
  TrainingResult training;
  EvaluationReport report;
  GenerationSet generated;
  /// Image keys handed to the generator and files decoded for generation.
  std::set<std::string> generation_keys;
  std::set<std::string> generation_files;
};

/// Trains on the seen classes, generates from the unseen support images and
/// scores against the unseen query images.  Writes train/ and eval/ under run_dir.
PipelineResult run_pipeline(const ModelConfig& cfg, const std::filesystem::path& run_dir,
                            const TrainingOptions& options = {});

/// Evaluates an already trained generator against the unseen split.
PipelineResult evaluate_generator(Generator& generator, const ModelConfig& cfg, SplitManifest& manifest,
                                  std::optional<Variant> variant = std::nullopt);

struct AblationCondition {
  std::string name;
  std::function<void(ModelConfig&)> apply;
};

/// full, w/o LoF, w/o LL, w/o HL, w/o L1.
std::vector<AblationCondition> ablation_conditions();

}  // namespace wavegan
