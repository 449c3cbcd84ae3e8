#include "wavegan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavegan/local_fusion.hpp"
#include "wavegan/losses.hpp"

namespace wavegan {

namespace fs = std::filesystem;
using nlohmann::json;

void make_deterministic(std::uint64_t seed) {
  torch::set_num_threads(1);
  torch::manual_seed(seed);
}

Episode sample_episode(const ImageDataset& dataset, int shots, std::mt19937_64& rng) {
  if (shots < 2) throw EpisodeError("episodes need at least 2 shots");
  const auto eligible = dataset.eligible_classes(shots);
  if (eligible.empty()) {
    throw EpisodeError("no class has at least " + std::to_string(shots) + " images");
  }
  const int pick = eligible[std::uniform_int_distribution<size_t>(0, eligible.size() - 1)(rng)];
  auto ep = sample_class_episode(dataset.classes()[pick], shots, rng);
  dataset.mark_touched(ep.keys);
  return ep;
}

Episode sample_class_episode(const ClassImages& cls, int shots, std::mt19937_64& rng) {
  if (static_cast<int>(cls.images.size()) < shots) {
    throw EpisodeError("class " + cls.name + " has fewer than " + std::to_string(shots) + " images");
  }
  // Partial Fisher-Yates: the first `shots` slots become the sample.
  std::vector<size_t> order(cls.images.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int i = 0; i < shots; ++i) {
    const auto j = std::uniform_int_distribution<size_t>(i, order.size() - 1)(rng);
    std::swap(order[i], order[j]);
  }
  Episode ep;
  ep.class_id = cls.label;
  ep.class_name = cls.name;
  ep.source = cls.split;
  std::vector<torch::Tensor> imgs;
  for (int i = 0; i < shots; ++i) {
    imgs.push_back(cls.images[order[i]]);
    ep.keys.push_back(cls.keys[order[i]]);
  }
  ep.images = torch::stack(imgs, 0);
  return ep;
}

double lr_schedule(int64_t step, const TrainConfig& cfg) {
  const auto start = cfg.decay_start();
  if (step <= start) return cfg.lr;
  if (step >= cfg.iterations) return 0.0;
  return cfg.lr * static_cast<double>(cfg.iterations - step) / static_cast<double>(cfg.iterations - start);
}

// ---------------------------------------------------------------------------
// Metrics CSV

MetricsWriter::MetricsWriter(fs::path path, int64_t first_step) : path_(std::move(path)) {
  std::vector<std::string> kept;
  if (fs::exists(path_)) {
    std::ifstream in(path_);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < first_step) kept.push_back(line);
    }
  }
  out_.open(path_, std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot write metrics file " + path_.string());
  out_ << kHeader << '\n';
  for (const auto& l : kept) out_ << l << '\n';
  out_.flush();
}

void MetricsWriter::write(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(m.step),
                m.l_adv_g, m.l_adv_d, m.l_cls_g, m.l_cls_d, m.l_fre, m.l_rec);
  out_ << buf;
  out_.flush();
}

std::vector<StepMetrics> MetricsWriter::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file " + path.string());
  std::vector<StepMetrics> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("malformed metrics row: " + line);
    StepMetrics m;
    m.step = std::stoll(cells[0]);
    m.l_adv_g = std::stod(cells[1]);
    m.l_adv_d = std::stod(cells[2]);
    m.l_cls_g = std::stod(cells[3]);
    m.l_cls_d = std::stod(cells[4]);
    m.l_fre = std::stod(cells[5]);
    m.l_rec = std::stod(cells[6]);
    rows.push_back(m);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(ModelConfig config, int num_classes)
    : config_(std::move(config)), num_classes_(num_classes), rng_(config_.train.seed) {
  config_.validate();
  torch::manual_seed(config_.train.seed);
  generator = Generator(config_.generator);
  discriminator = Discriminator(config_.discriminator, config_.generator.image_size, config_.generator.in_channels,
                                num_classes);
  const auto& t = config_.train;
  opt_g_ = std::make_unique<torch::optim::Adam>(
      generator->parameters(), torch::optim::AdamOptions(t.lr).betas({t.beta1, t.beta2}));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      discriminator->parameters(), torch::optim::AdamOptions(t.lr).betas({t.beta1, t.beta2}));
}

std::vector<Episode> Trainer::sample_batch(const ImageDataset& dataset) {
  std::vector<Episode> batch;
  for (int i = 0; i < config_.train.batch_episodes; ++i) {
    batch.push_back(sample_episode(dataset, config_.train.shots, rng_));
  }
  return batch;
}

namespace {

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

void check_finite(const std::vector<std::pair<const char*, double>>& parts, int64_t step) {
  for (const auto& [name, v] : parts) {
    if (std::isfinite(v)) continue;
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << " in component " << name << "; components:";
    for (const auto& [n, x] : parts) msg << ' ' << n << '=' << x;
    throw NonFiniteLossError(msg.str());
  }
}

}  // namespace

StepMetrics Trainer::train_step(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw EpisodeError("train_step: empty batch");
  const auto& w = config_.loss;
  const double lr = lr_schedule(step_, config_.train);
  set_lr(*opt_g_, lr);
  set_lr(*opt_d_, lr);

  std::vector<torch::Tensor> stacks;
  std::vector<int64_t> labels;
  for (const auto& ep : episodes) {
    stacks.push_back(ep.images);
    labels.push_back(ep.class_id);
  }
  auto x = torch::stack(stacks, 0);  // (B, K, C, S, S)
  const auto B = x.size(0), K = x.size(1);
  auto y = torch::tensor(labels, torch::kLong);

  std::vector<FusionPlan> plans;
  for (int64_t e = 0; e < B; ++e) plans.push_back(make_fusion_plan(static_cast<int>(K), rng_(), config_.generator.fusion));

  generator->train();
  discriminator->train();
  auto fake = generator->forward(x, plans);

  // Discriminator update on all real shots and the generated batch.
  auto real = x.reshape({B * K, x.size(2), x.size(3), x.size(4)});
  auto real_labels = y.repeat_interleave(K);
  opt_d_->zero_grad();
  auto d_real = discriminator->forward(real);
  auto d_fake = discriminator->forward(fake.detach());
  DiscriminatorLossParts dp{hinge_d(d_real.adv_score, d_fake.adv_score),
                            classification_loss(d_real.class_logits, real_labels)};
  auto l_d = total_d(dp, w);

  StepMetrics m;
  m.step = step_;
  m.lr = lr;
  m.l_adv_d = dp.adv.item<double>();
  m.l_cls_d = dp.cls.item<double>();
  m.l_d = l_d.item<double>();
  check_finite({{"l_adv_d", m.l_adv_d}, {"l_cls_d", m.l_cls_d}}, step_);
  l_d.backward();
  opt_d_->step();

  // Generator update against the refreshed discriminator.
  opt_g_->zero_grad();
  set_requires_grad(*discriminator, false);
  auto d_gen = discriminator->forward(fake);
  std::vector<int64_t> base_ids;
  std::vector<torch::Tensor> targets;
  for (int64_t e = 0; e < B; ++e) {
    base_ids.push_back(plans[e].base_index);
    targets.push_back(fuse_images(x[e], plans[e]));
  }
  auto base_images = x.index({torch::arange(B), torch::tensor(base_ids, torch::kLong)});
  GeneratorLossParts gp{hinge_g(d_gen.adv_score), classification_loss(d_gen.class_logits, y),
                        frequency_l1(base_images, fake), local_reconstruction(fake, torch::stack(targets, 0))};
  auto l_g = total_g(gp, w);
  m.l_adv_g = gp.adv.item<double>();
  m.l_cls_g = gp.cls.item<double>();
  m.l_fre = gp.fre.item<double>();
  m.l_rec = gp.rec.item<double>();
  m.l_g = l_g.item<double>();
  check_finite({{"l_adv_g", m.l_adv_g}, {"l_cls_g", m.l_cls_g}, {"l_fre", m.l_fre}, {"l_rec", m.l_rec}}, step_);
  l_g.backward();
  opt_g_->step();
  set_requires_grad(*discriminator, true);

  ++step_;
  return m;
}

void Trainer::save_checkpoint(const fs::path& path, bool final) const {
  std::ostringstream rng_state;
  rng_state << rng_;
  json meta{{"version", kCheckpointVersion}, {"step", step_},          {"final", final},
            {"num_classes", num_classes_},  {"config", to_json(config_)}, {"rng", rng_state.str()}};

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta.dump()));
  torch::serialize::OutputArchive g, d, og, od;
  generator->save(g);
  discriminator->save(d);
  opt_g_->save(og);
  opt_d_->save(od);
  archive.write("generator", g);
  archive.write("discriminator", d);
  archive.write("opt_g", og);
  archive.write("opt_d", od);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

Trainer Trainer::load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint " + path.string() + " does not exist");
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue meta_value;
  archive.read("meta", meta_value);
  const auto meta = json::parse(meta_value.toStringRef());
  if (meta.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path.string() + " has unsupported version");
  }
  Trainer t(config_from_json(meta.at("config")), meta.at("num_classes").get<int>());
  torch::serialize::InputArchive g, d, og, od;
  archive.read("generator", g);
  archive.read("discriminator", d);
  archive.read("opt_g", og);
  archive.read("opt_d", od);
  t.generator->load(g);
  t.discriminator->load(d);
  t.opt_g_->load(og);
  t.opt_d_->load(od);
  t.step_ = meta.at("step").get<int64_t>();
  std::istringstream rng_state(meta.at("rng").get<std::string>());
  rng_state >> t.rng_;
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoint manifest and the training loop

namespace {

constexpr const char* kCheckpointManifest = "checkpoints.json";

void write_checkpoint_manifest(const fs::path& run_dir, const std::vector<CheckpointEntry>& entries) {
  json list = json::array();
  for (const auto& e : entries) list.push_back({{"step", e.step}, {"file", e.file}, {"final", e.final}});
  const auto path = run_dir / kCheckpointManifest;
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    out << json{{"version", kCheckpointVersion}, {"checkpoints", list}}.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

}  // namespace

std::vector<CheckpointEntry> read_checkpoint_manifest(const fs::path& run_dir) {
  std::vector<CheckpointEntry> out;
  const auto path = run_dir / kCheckpointManifest;
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  const auto j = json::parse(in);
  for (const auto& e : j.at("checkpoints")) {
    out.push_back({e.at("step").get<int64_t>(), e.at("file").get<std::string>(), e.at("final").get<bool>()});
  }
  return out;
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const auto entries = read_checkpoint_manifest(run_dir);
  if (entries.empty()) return std::nullopt;
  return run_dir / entries.back().file;
}

std::optional<fs::path> final_checkpoint(const fs::path& run_dir) {
  for (const auto& e : read_checkpoint_manifest(run_dir)) {
    if (e.final) return run_dir / e.file;
  }
  return std::nullopt;
}

TrainingResult run_training(const ImageDataset& seen, const ModelConfig& cfg, const fs::path& run_dir,
                            const TrainingOptions& options) {
  if (seen.contains_split(Split::Unseen)) {
    throw DataError("training data contains unseen classes; refusing to train");
  }
  if (seen.num_classes() == 0) throw DataError("training data has no classes");
  cfg.validate();
  fs::create_directories(run_dir);
  make_deterministic(cfg.train.seed);

  auto entries = read_checkpoint_manifest(run_dir);
  std::optional<Trainer> trainer;
  TrainingResult result;
  if (options.resume && !entries.empty()) {
    trainer.emplace(Trainer::load_checkpoint(run_dir / entries.back().file));
    result.resumed_from = trainer->step();
    if (entries.back().final) {
      result.completed = true;
      result.final_checkpoint = run_dir / entries.back().file;
      return result;
    }
  } else {
    entries.clear();
    trainer.emplace(cfg, static_cast<int>(seen.num_classes()));
  }

  MetricsWriter metrics(run_dir / "metrics.csv", trainer->step());
  const auto& t = trainer->config().train;
  while (trainer->step() < t.iterations) {
    if (options.stop_at_step && trainer->step() >= *options.stop_at_step) return result;
    auto batch = trainer->sample_batch(seen);
    auto m = trainer->train_step(batch);
    metrics.write(m);
    result.metrics.push_back(m);
    if (options.on_step) options.on_step(m);
    if (options.log_every > 0 && (m.step + 1) % options.log_every == 0) {
      std::cerr << "[train] step " << m.step + 1 << "/" << t.iterations << " l_d=" << m.l_d << " l_g=" << m.l_g
                << '\n';
    }
    const bool final = trainer->step() == t.iterations;
    if (final || trainer->step() % t.checkpoint_interval == 0) {
      const std::string file = std::to_string(trainer->step()) + ".ckpt";
      trainer->save_checkpoint(run_dir / file, final);
      entries.push_back({trainer->step(), file, final});
      write_checkpoint_manifest(run_dir, entries);
      if (final) result.final_checkpoint = run_dir / file;
    }
  }
  result.completed = true;
  return result;
}

}  // namespace wavegan
