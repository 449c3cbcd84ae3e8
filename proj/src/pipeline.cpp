#include "wavegan/pipeline.hpp"

#include <iostream>

namespace wavegan {

namespace fs = std::filesystem;

SplitManifest resolve_manifest(const ModelConfig& cfg) {
  if (!cfg.data.manifest.empty()) {
    if (!fs::exists(cfg.data.manifest)) {
      throw DataError("manifest not found: " + cfg.data.manifest + " (create one with `wavegan split`)");
    }
    return SplitManifest::load(cfg.data.manifest);
  }
  if (cfg.data.root.empty()) throw DataError("data.root is not set; pass --set data.root=<dir>");
  return build_manifest(cfg.data.root, cfg.data.seen_classes, cfg.data.unseen_classes, cfg.data.support_fraction,
                        cfg.data.split_seed);
}

Generator load_generator(const fs::path& checkpoint_or_run, ModelConfig* config_out) {
  fs::path file = checkpoint_or_run;
  if (fs::is_directory(file)) {
    auto found = final_checkpoint(file);
    if (!found && fs::is_directory(file / "train")) found = final_checkpoint(file / "train");
    if (!found) throw DataError("no final checkpoint under " + file.string() + "; finish training first");
    file = *found;
  }
  if (!fs::exists(file)) throw DataError("checkpoint not found: " + file.string());
  auto trainer = Trainer::load_checkpoint(file);
  if (config_out) *config_out = trainer.config();
  return trainer.generator;
}

PipelineResult evaluate_generator(Generator& generator, const ModelConfig& cfg, SplitManifest& manifest,
                                  std::optional<Variant> variant) {
  PipelineResult result;
  const int size = cfg.generator.image_size;
  {
    ReadAudit audit;
    ReadAuditScope scope(audit);
    auto support = load_dataset(cfg.data.root, manifest, Split::Unseen, {Partition::Support}, size);
    result.generated =
        generate_set(generator, support, cfg.eval_shots(), cfg.eval.images_per_class, cfg.eval.seed, variant);
    result.generation_keys = support.touched();
    result.generation_files = audit.paths();
  }
  auto query = load_dataset(cfg.data.root, manifest, Split::Unseen, {Partition::Query}, size);
  FeatureEmbedder embedder(cfg.eval.embedder_seed, cfg.generator.in_channels);
  result.report = evaluate_set(result.generated, query, embedder);
  return result;
}

PipelineResult run_pipeline(const ModelConfig& cfg, const fs::path& run_dir, const TrainingOptions& options) {
  cfg.validate();
  auto manifest = resolve_manifest(cfg);
  fs::create_directories(run_dir);
  manifest.save(run_dir / "manifest.json");
  auto seen = load_dataset(cfg.data.root, manifest, Split::Seen, {Partition::Train}, cfg.generator.image_size);
  auto training = run_training(seen, cfg, run_dir / "train", options);
  if (!training.completed || !training.final_checkpoint) {
    throw std::runtime_error("training stopped before the final checkpoint");
  }
  auto generator = load_generator(*training.final_checkpoint);
  auto result = evaluate_generator(generator, cfg, manifest);
  result.training = std::move(training);
  write_evaluation(result.report, run_dir / "eval");
  return result;
}

std::vector<AblationCondition> ablation_conditions() {
  return {
      {"full", [](ModelConfig&) {}},
      {"w/o LoF", [](ModelConfig& c) { c.generator.use_lof = false; }},
      {"w/o LL", [](ModelConfig& c) { c.generator.use_ll_skip = false; }},
      {"w/o HL", [](ModelConfig& c) { c.generator.use_hf_skip = false; }},
      {"w/o L1", [](ModelConfig& c) { c.loss.lambda_fre = 0.0; }},
  };
}

}  // namespace wavegan
