#include "wavegan/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "wavegan/config.hpp"
#include "wavegan/data_io.hpp"
#include "wavegan/evaluation.hpp"
#include "wavegan/pipeline.hpp"
#include "wavegan/trainer.hpp"

#ifndef WAVEGAN_VERSION
#define WAVEGAN_VERSION "dev"
#endif

namespace wavegan {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string run_id;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string variant;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ModelConfig build_config(const CommonArgs& args, const ModelConfig& base) {
  ModelConfig cfg = base;
  if (!args.config.empty()) {
    if (!fs::exists(args.config)) throw UsageError("config file not found: " + args.config);
    cfg = load_config(args.config);
  }
  cfg = apply_overrides(cfg, args.overrides);
  if (args.seed) {
    cfg.train.seed = *args.seed;
    cfg.eval.seed = *args.seed;
    cfg.data.split_seed = *args.seed;
  }
  cfg.validate();
  return cfg;
}

// Config for commands that start from a trained checkpoint: the checkpoint's
// model settings, with data and eval sections taken from --config when given.
ModelConfig checkpoint_config(const CommonArgs& args, const ModelConfig& stored) {
  ModelConfig cfg = stored;
  if (!args.config.empty()) {
    if (!fs::exists(args.config)) throw UsageError("config file not found: " + args.config);
    auto file = load_config(args.config);
    cfg.data = file.data;
    cfg.eval = file.eval;
  }
  cfg = apply_overrides(cfg, args.overrides);
  if (args.seed) cfg.eval.seed = *args.seed;
  cfg.validate();
  return cfg;
}

fs::path output_root(const CommonArgs& args) {
  if (!args.out.empty()) return args.out;
  if (const char* env = std::getenv("WAVEGAN_OUT"); env && *env) return env;
  return "runs";
}

std::string default_run_id(const fs::path& root, const std::string& command) {
  for (int i = 1;; ++i) {
    auto id = command + "-" + std::to_string(i);
    if (!fs::exists(root / id)) return id;
  }
}

class RunDir {
 public:
  RunDir(const CommonArgs& args, const std::string& command, const ModelConfig& cfg) {
    const auto root = output_root(args);
    const auto id = args.run_id.empty() ? default_run_id(root, command) : args.run_id;
    dir_ = root / id;
    const auto record_path = dir_ / "run.json";
    if (fs::exists(record_path)) {
      auto previous = json::parse(std::ifstream(record_path));
      if (previous.value("status", "") == "complete") {
        throw UsageError("run id '" + id + "' already exists in " + root.string() + "; choose another --run-id");
      }
      if (previous.value("command", "") != command) {
        throw UsageError("run id '" + id + "' belongs to an unfinished `" + previous.value("command", "") +
                         "` run; choose another --run-id");
      }
    } else if (fs::exists(dir_) && !fs::is_empty(dir_)) {
      throw UsageError(dir_.string() + " exists and is not a run directory");
    }
    fs::create_directories(dir_);
    std::ofstream(dir_ / "INCOMPLETE") << command << '\n';
    save_config(cfg, dir_ / "config.json");
    record_ = {{"command", command},
               {"run_id", id},
               {"seed", cfg.train.seed},
               {"eval_seed", cfg.eval.seed},
               {"split_seed", cfg.data.split_seed},
               {"version", WAVEGAN_VERSION},
               {"status", "incomplete"}};
    write_record();
    std::cerr << "[" << command << "] writing to " << dir_.string() << '\n';
  }

  const fs::path& path() const { return dir_; }
  json& record() { return record_; }

  void complete() {
    record_["status"] = "complete";
    write_record();
    fs::remove(dir_ / "INCOMPLETE");
  }

 private:
  void write_record() const { std::ofstream(dir_ / "run.json") << record_.dump(2) << '\n'; }

  fs::path dir_;
  json record_;
};

std::optional<Variant> parse_variant(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return variant_from_string(name);
}

std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void cmd_synth(const CommonArgs& args, int classes, int images, int size) {
  auto cfg = build_config(args, ModelConfig{});
  RunDir run(args, "synth", cfg);
  const auto root = run.path() / "images";
  write_synthetic_dataset(root, classes, images, size, cfg.data.split_seed);
  run.record()["dataset"] = {{"root", root.string()}, {"classes", classes}, {"images_per_class", images}};
  run.complete();
  std::cout << root.string() << '\n';
}

void cmd_split(const CommonArgs& args) {
  auto cfg = build_config(args, ModelConfig{});
  if (cfg.data.root.empty()) throw UsageError("split needs a dataset: --set data.root=<dir>");
  RunDir run(args, "split", cfg);
  auto manifest = build_manifest(cfg.data.root, cfg.data.seen_classes, cfg.data.unseen_classes,
                                 cfg.data.support_fraction, cfg.data.split_seed);
  manifest.save(run.path() / "manifest.json");
  run.complete();
  std::cout << (run.path() / "manifest.json").string() << '\n';
}

void cmd_train(const CommonArgs& args, int64_t log_every) {
  auto cfg = build_config(args, ModelConfig{});
  RunDir run(args, "train", cfg);
  auto manifest = resolve_manifest(cfg);
  manifest.save(run.path() / "manifest.json");
  auto seen = load_dataset(cfg.data.root, manifest, Split::Seen, {Partition::Train}, cfg.generator.image_size);
  TrainingOptions options;
  options.log_every = log_every;
  auto result = run_training(seen, cfg, run.path(), options);
  if (!result.completed || !result.final_checkpoint) throw std::runtime_error("training did not finish");
  run.record()["final_checkpoint"] = result.final_checkpoint->filename().string();
  run.record()["resumed_from"] = result.resumed_from;
  run.complete();
  std::cout << result.final_checkpoint->string() << '\n';
}

void require_checkpoint(const CommonArgs& args, const std::string& command) {
  if (args.checkpoint.empty()) {
    throw UsageError(command + " needs a trained model: --checkpoint <file.ckpt or train run directory>");
  }
}

void write_provenance(RunDir& run, const GenerationSet& set, const CommonArgs& args,
                      const PipelineResult& result, const SplitManifest& manifest) {
  std::size_t query_reads = 0;
  for (const auto& key : result.generation_keys) {
    auto it = manifest.images.find(key);
    if (it != manifest.images.end() && it->second == Partition::Query) ++query_reads;
  }
  run.record()["generation"] = {{"checkpoint", args.checkpoint},
                                {"seed", set.provenance.seed},
                                {"variant", to_string(set.provenance.variant)},
                                {"K", set.provenance.shots},
                                {"images_per_class", set.images_per_class},
                                {"classes", set.images.size()},
                                {"skipped", set.skipped},
                                {"support_images_used", result.generation_keys.size()},
                                {"query_reads", query_reads}};
}

void cmd_generate(const CommonArgs& args) {
  require_checkpoint(args, "generate");
  ModelConfig stored;
  auto generator = load_generator(args.checkpoint, &stored);
  auto cfg = checkpoint_config(args, stored);
  RunDir run(args, "generate", cfg);
  auto manifest = resolve_manifest(cfg);
  auto support = load_dataset(cfg.data.root, manifest, Split::Unseen, {Partition::Support}, cfg.generator.image_size);
  auto set = generate_set(generator, support, cfg.eval_shots(), cfg.eval.images_per_class, cfg.eval.seed,
                          parse_variant(args.variant));
  set.provenance.checkpoint = args.checkpoint;
  save_generation_set(set, run.path() / "images");
  PipelineResult reads;
  reads.generation_keys = support.touched();
  write_provenance(run, set, args, reads, manifest);
  run.complete();
}

void cmd_evaluate(const CommonArgs& args, bool classify) {
  require_checkpoint(args, "evaluate");
  ModelConfig stored;
  auto generator = load_generator(args.checkpoint, &stored);
  auto cfg = checkpoint_config(args, stored);
  RunDir run(args, "evaluate", cfg);
  auto manifest = resolve_manifest(cfg);
  auto result = evaluate_generator(generator, cfg, manifest, parse_variant(args.variant));
  write_evaluation(result.report, run.path());
  write_provenance(run, result.generated, args, result, manifest);
  if (classify) {
    auto unseen = load_dataset(cfg.data.root, manifest, Split::Unseen, {Partition::Support, Partition::Query},
                               cfg.generator.image_size);
    AugmentOptions opts;
    opts.train_per_class = cfg.eval.cls_train;
    opts.val_per_class = cfg.eval.cls_val;
    opts.test_per_class = cfg.eval.cls_test;
    opts.shots = cfg.eval_shots();
    opts.epochs = cfg.eval.cls_epochs;
    opts.seed = cfg.eval.seed;
    opts.conditions = {{"base", 0}, {"copies", cfg.eval.cls_augment}, {"wavegan", cfg.eval.cls_augment}};
    auto rows = augment_classify(unseen, generator, opts, fs::path(cfg.data.root).filename().string());
    write_augment_table(rows, run.path() / "augment.csv");
  }
  run.complete();
  std::cout << result.report.to_json().dump(2) << '\n';
}

void cmd_decompose(const CommonArgs& args, const std::vector<std::string>& images, int size) {
  auto cfg = build_config(args, ModelConfig{});
  if (images.empty()) throw UsageError("decompose needs at least one --image");
  RunDir run(args, "decompose", cfg);
  const int s = size > 0 ? size : cfg.generator.image_size;
  std::vector<torch::Tensor> loaded;
  for (const auto& path : images) {
    if (!fs::exists(path)) throw UsageError("image not found: " + path);
    loaded.push_back(load_image(path, s));
  }
  write_band_visualization(torch::stack(loaded, 0), run.path());
  run.record()["images"] = images;
  run.complete();
  std::cout << (run.path() / "grid.png").string() << '\n';
}

void cmd_sweep(const CommonArgs& args, std::vector<int> shots) {
  auto cfg = build_config(args, ModelConfig{});
  if (shots.empty()) shots = cfg.eval.sweep_shots;
  RunDir run(args, "sweep", cfg);
  auto manifest = resolve_manifest(cfg);
  auto table = shot_sweep(shots, [&](int k, Variant variant) {
    auto c = cfg;
    c.train.shots = k;
    c.eval.shots = k;
    c.generator.variant = variant;
    c.data.manifest = (run.path() / "manifest.json").string();
    manifest.save(c.data.manifest);
    const auto dir = run.path() / ("K" + std::to_string(k) + "_" + to_string(variant));
    auto result = run_pipeline(c, dir);
    auto generator = load_generator(*result.training.final_checkpoint);
    if (result.generated.images.empty()) throw DataError("sweep: no class produced generated images");
    const auto& first = result.generated.images.begin()->second;
    SweepRow row;
    row.fid = result.report.fid;
    row.lpips_proxy = result.report.lpips_proxy;
    row.duplicate_equal = duplicated_episode_agrees(generator, first[0], k, c.eval.seed);
    return row;
  });
  table.write_csv(run.path() / "sweep.csv");
  std::ofstream(run.path() / "sweep.json") << table.to_json().dump(2) << '\n';
  for (const auto& r : table.rows) {
    if (!r.error.empty()) throw std::runtime_error("sweep finished with failed rows; see sweep.csv");
  }
  run.complete();
}

void cmd_ablate(const CommonArgs& args) {
  auto cfg = build_config(args, ModelConfig{});
  RunDir run(args, "ablate", cfg);
  auto manifest = resolve_manifest(cfg);
  manifest.save(run.path() / "manifest.json");
  std::ofstream csv(run.path() / "ablation.csv");
  csv << "condition,fid,lpips_proxy\n";
  for (const auto& cond : ablation_conditions()) {
    auto c = cfg;
    cond.apply(c);
    c.data.manifest = (run.path() / "manifest.json").string();
    std::cerr << "[ablate] " << cond.name << '\n';
    auto result = run_pipeline(c, run.path() / slug(cond.name));
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", cond.name.c_str(), result.report.fid,
                  result.report.lpips_proxy);
    csv << buf << std::flush;
  }
  run.complete();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Few-shot image generation with wavelet skip connections"};
  app.set_version_flag("--version", WAVEGAN_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs args;
  app.add_option("--config", args.config, "JSON config file");
  app.add_option("--set", args.overrides, "Override a config key, e.g. --set train.iterations=2000");
  app.add_option("--run-id", args.run_id, "Name of the output directory under --out");
  app.add_option("--seed", args.seed, "Seed for training, generation and splitting");
  app.add_option("--out", args.out, "Output root (default: $WAVEGAN_OUT or ./runs)");

  int synth_classes = 10, synth_images = 60, synth_size = 32;
  auto* synth = app.add_subcommand("synth", "Write a toy striped-texture dataset");
  synth->add_option("--classes", synth_classes);
  synth->add_option("--images", synth_images, "Images per class");
  synth->add_option("--size", synth_size);

  app.add_subcommand("split", "Split class folders into seen/unseen and support/query");

  int64_t log_every = 100;
  auto* train = app.add_subcommand("train", "Train on the seen classes");
  train->add_option("--log-every", log_every, "Write a metrics row every N steps");

  auto* generate = app.add_subcommand("generate", "Generate images for every unseen class");
  generate->add_option("--checkpoint", args.checkpoint);
  generate->add_option("--variant", args.variant, "mean or base_index");

  bool classify = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score generated images against the unseen query images");
  evaluate->add_option("--checkpoint", args.checkpoint);
  evaluate->add_option("--variant", args.variant, "mean or base_index");
  evaluate->add_flag("--classify", classify, "Also run the augmentation classification experiment");

  std::vector<std::string> images;
  int decompose_size = 0;
  auto* decompose = app.add_subcommand("decompose", "Write a band visualisation grid for images");
  decompose->add_option("--image", images)->required();
  decompose->add_option("--size", decompose_size, "Resize to this size (default generator.image_size)");

  std::vector<int> sweep_shots;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate both variants for several K");
  sweep->add_option("--shots", sweep_shots, "Shot counts, e.g. 2,3,5")->delimiter(',');

  app.add_subcommand("ablate", "Train and evaluate the ablation conditions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const auto name = sub->get_name();
    if (name == "synth") cmd_synth(args, synth_classes, synth_images, synth_size);
    else if (name == "split") cmd_split(args);
    else if (name == "train") cmd_train(args, log_every);
    else if (name == "generate") cmd_generate(args);
    else if (name == "evaluate") cmd_evaluate(args, classify);
    else if (name == "decompose") cmd_decompose(args, images, decompose_size);
    else if (name == "sweep") cmd_sweep(args, sweep_shots);
    else if (name == "ablate") cmd_ablate(args);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace wavegan
