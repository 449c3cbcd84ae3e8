#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "wavegan/config.hpp"
#include "wavegan/data_io.hpp"
#include "wavegan/discriminator.hpp"
#include "wavegan/generator.hpp"

namespace wavegan {

inline constexpr int kCheckpointVersion = 1;

/// One K-shot task: K images of a single class.
struct Episode {
  torch::Tensor images;  // (K, C, H, W)
  int class_id = 0;
  std::string class_name;
  Split source = Split::Seen;
  std::vector<std::string> keys;
};

/// Uniform class among those with >= shots images, then `shots` distinct images.
Episode sample_episode(const ImageDataset& dataset, int shots, std::mt19937_64& rng);

/// `shots` distinct images of one class.
Episode sample_class_episode(const ClassImages& cls, int shots, std::mt19937_64& rng);

/// Constant until the decay start, then linear to zero at cfg.iterations.
double lr_schedule(int64_t step, const TrainConfig& cfg);

struct StepMetrics {
  int64_t step = 0;
  double l_adv_g = 0.0;
  double l_adv_d = 0.0;
  double l_cls_g = 0.0;
  double l_cls_d = 0.0;
  double l_fre = 0.0;
  double l_rec = 0.0;
  /// Totals as used for the parameter updates.
  double l_g = 0.0;
  double l_d = 0.0;
  double lr = 0.0;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends metrics rows: step,l_adv_g,l_adv_d,l_cls_g,l_cls_d,l_fre,l_rec.
class MetricsWriter {
 public:
  /// Keeps existing rows with step < first_step and truncates the rest.
  MetricsWriter(std::filesystem::path path, int64_t first_step);
  void write(const StepMetrics& m);

  static std::vector<StepMetrics> read(const std::filesystem::path& path);
  static constexpr const char* kHeader = "step,l_adv_g,l_adv_d,l_cls_g,l_cls_d,l_fre,l_rec";

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Generator, discriminator, their optimizers and the sampling RNG.
class Trainer {
 public:
  Trainer(ModelConfig config, int num_classes);

  /// One discriminator update followed by one generator update.
  StepMetrics train_step(const std::vector<Episode>& episodes);

  /// Draws batch_episodes episodes with the trainer's RNG.
  std::vector<Episode> sample_batch(const ImageDataset& dataset);

  void save_checkpoint(const std::filesystem::path& path, bool final) const;
  static Trainer load_checkpoint(const std::filesystem::path& path);

  const ModelConfig& config() const { return config_; }
  int num_classes() const { return num_classes_; }
  int64_t step() const { return step_; }

  Generator generator{nullptr};
  Discriminator discriminator{nullptr};

 private:
  ModelConfig config_;
  int num_classes_;
  int64_t step_ = 0;
  std::mt19937_64 rng_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
};

struct CheckpointEntry {
  int64_t step = 0;
  std::string file;
  bool final = false;
};

/// checkpoints.json in a run directory.
std::vector<CheckpointEntry> read_checkpoint_manifest(const std::filesystem::path& run_dir);
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);
std::optional<std::filesystem::path> final_checkpoint(const std::filesystem::path& run_dir);

struct TrainingOptions {
  bool resume = true;
  /// Stop (as if interrupted) once this many total steps have run.
  std::optional<int64_t> stop_at_step;
  int64_t log_every = 0;
  /// Called after every step.
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainingResult {
  std::vector<StepMetrics> metrics;
  std::optional<std::filesystem::path> final_checkpoint;
  bool completed = false;
  int64_t resumed_from = 0;
};

/// Runs the configured number of steps on seen classes, writing metrics.csv,
/// {step}.ckpt files and checkpoints.json under run_dir.
TrainingResult run_training(const ImageDataset& seen, const ModelConfig& cfg, const std::filesystem::path& run_dir,
                            const TrainingOptions& options = {});

/// Makes libtorch single-threaded and seeds its global generator.
void make_deterministic(std::uint64_t seed);

}  // namespace wavegan
