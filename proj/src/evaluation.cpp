#include "wavegan/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "wavegan/discriminator.hpp"
#include "wavegan/haar.hpp"
#include "wavegan/trainer.hpp"

namespace wavegan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int64_t kGenerationBatch = 16;

std::mt19937_64 class_rng(std::uint64_t seed, std::size_t class_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(class_index)};
  return std::mt19937_64(seq);
}

// Switches a module to eval mode and restores the previous mode on exit.
class EvalModeGuard {
 public:
  explicit EvalModeGuard(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalModeGuard() { module_.train(was_training_); }

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

torch::Tensor generate_from_class(Generator& generator, const ClassImages& cls, int shots, int64_t count,
                                  std::mt19937_64& rng, std::optional<Variant> variant) {
  std::vector<torch::Tensor> out;
  int64_t made = 0;
  while (made < count) {
    const auto batch = std::min(kGenerationBatch, count - made);
    std::vector<torch::Tensor> episodes;
    std::vector<FusionPlan> plans;
    for (int64_t b = 0; b < batch; ++b) {
      episodes.push_back(sample_class_episode(cls, shots, rng).images);
      plans.push_back(make_fusion_plan(shots, rng(), generator->config().fusion));
    }
    out.push_back(generator->forward(torch::stack(episodes, 0), plans, variant));
    made += batch;
  }
  return torch::cat(out, 0);
}

}  // namespace

GenerationSet generate_set(Generator& generator, const ImageDataset& support, int shots, int images_per_class,
                           std::uint64_t seed, std::optional<Variant> variant) {
  if (images_per_class < 1) throw std::invalid_argument("generate_set: images_per_class must be positive");
  torch::NoGradGuard no_grad;
  EvalModeGuard eval(*generator);

  GenerationSet set;
  set.images_per_class = images_per_class;
  set.provenance.seed = seed;
  set.provenance.shots = shots;
  set.provenance.variant = variant.value_or(generator->config().variant);
  for (std::size_t ci = 0; ci < support.classes().size(); ++ci) {
    const auto& cls = support.classes()[ci];
    if (static_cast<int>(cls.images.size()) < shots) {
      std::cerr << "[warn] class " << cls.name << " has " << cls.images.size() << " support images, needs " << shots
                << "; skipped\n";
      set.skipped.push_back(cls.name);
      continue;
    }
    auto rng = class_rng(seed, ci);
    set.images[cls.name] = generate_from_class(generator, cls, shots, images_per_class, rng, variant);
    support.mark_touched(cls.keys);
  }
  return set;
}

void save_generation_set(const GenerationSet& set, const fs::path& dir) {
  for (const auto& [name, images] : set.images) {
    for (int64_t i = 0; i < images.size(0); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%04lld.png", static_cast<long long>(i));
      save_image(images[i], dir / name / file);
    }
  }
}

json EvaluationReport::to_json() const {
  json classes = json::object();
  for (const auto& [name, s] : per_class) classes[name] = {{"fid", s.fid}, {"lpips_proxy", s.lpips_proxy}};
  return {{"variant", wavegan::to_string(variant)},
          {"K", shots},
          {"fid", fid},
          {"lpips_proxy", lpips_proxy},
          {"metric_backend", "perceptual-proxy"},
          {"covariance_regularized", regularized},
          {"per_class", classes}};
}

EvaluationReport evaluate_set(const GenerationSet& set, const ImageDataset& query, const FeatureEmbedder& embedder) {
  EvaluationReport report;
  report.variant = set.provenance.variant;
  report.shots = set.provenance.shots;
  std::vector<torch::Tensor> all_fake, all_real;
  double lpips_sum = 0.0;
  int lpips_count = 0;
  for (const auto& cls : query.classes()) {
    auto it = set.images.find(cls.name);
    if (it == set.images.end() || cls.images.empty()) continue;
    auto real = torch::stack(cls.images, 0);
    const auto& fake = it->second;
    ClassScore score;
    const auto fid = compute_fid(fake, real, embedder);
    score.fid = fid.distance;
    report.regularized = report.regularized || fid.regularized;
    if (fake.size(0) >= 2) {
      score.lpips_proxy = compute_lpips_proxy(fake, embedder);
      lpips_sum += score.lpips_proxy;
      ++lpips_count;
    }
    report.per_class[cls.name] = score;
    all_fake.push_back(fake);
    all_real.push_back(real);
  }
  if (all_fake.empty()) throw std::invalid_argument("evaluate_set: no class has both generated and query images");
  const auto pooled = compute_fid(torch::cat(all_fake, 0), torch::cat(all_real, 0), embedder);
  report.fid = pooled.distance;
  report.regularized = report.regularized || pooled.regularized;
  report.lpips_proxy = lpips_count > 0 ? lpips_sum / lpips_count : 0.0;
  return report;
}

void write_evaluation(const EvaluationReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "metrics.csv");
  csv << "class,fid,lpips_proxy\n";
  char buf[256];
  for (const auto& [name, s] : report.per_class) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", name.c_str(), s.fid, s.lpips_proxy);
    csv << buf;
  }
  std::snprintf(buf, sizeof buf, "all,%.10g,%.10g\n", report.fid, report.lpips_proxy);
  csv << buf;
  std::ofstream(dir / "summary.json") << report.to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Band visualisation

BandVisualization visualize_bands(const torch::Tensor& images) {
  if (images.dim() != 4) throw ShapeError("visualize_bands: expected (N, C, H, W) images");
  const auto bands = haar_decompose(images.to(torch::kFloat64));
  BandVisualization vis;
  vis.panels = {bands.ll, bands.lh, bands.hl, bands.hh, bands.lh + bands.hl + bands.hh};

  double detail_scale = 0.0;
  for (size_t p = 1; p < vis.panels.size(); ++p) {
    detail_scale = std::max(detail_scale, vis.panels[p].abs().max().item<double>());
  }
  if (detail_scale == 0.0) detail_scale = 1.0;

  std::vector<torch::Tensor> display;
  display.push_back((vis.panels[0] / 2.0).clamp(-1.0, 1.0));
  for (size_t p = 1; p < vis.panels.size(); ++p) display.push_back((vis.panels[p] / detail_scale).clamp(-1.0, 1.0));

  std::vector<torch::Tensor> rows;
  for (int64_t n = 0; n < images.size(0); ++n) {
    std::vector<torch::Tensor> cols;
    for (const auto& d : display) cols.push_back(d[n]);
    rows.push_back(torch::cat(cols, 2));
  }
  vis.grid = torch::cat(rows, 1).to(torch::kFloat32);
  vis.metadata = {{"rows", images.size(0)},
                  {"columns", {"LL", "LH", "HL", "HH", "LH+HL+HH"}},
                  {"panel_size", {images.size(2) / 2, images.size(3) / 2}},
                  {"ll_display", "value / 2"},
                  {"detail_display", "value / detail_scale, clamped to [-1, 1]"},
                  {"detail_scale", detail_scale},
                  {"pixel_mapping", "(display + 1) * 127.5"}};
  return vis;
}

BandVisualization write_band_visualization(const torch::Tensor& images, const fs::path& dir) {
  auto vis = visualize_bands(images);
  fs::create_directories(dir);
  save_image(vis.grid, dir / "grid.png");
  std::ofstream(dir / "grid.json") << vis.metadata.dump(2) << '\n';
  return vis;
}

// ---------------------------------------------------------------------------
// Shot sweep

bool duplicated_episode_agrees(Generator& generator, const torch::Tensor& image, int shots, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto episode = image.unsqueeze(0).unsqueeze(0).expand({1, shots, image.size(0), image.size(1), image.size(2)});
  auto plans = make_fusion_plans(1, shots, seed, generator->config().fusion);
  auto trace = generator->encode(episode.contiguous(), plans);
  auto mean = generator->decode(trace, Variant::Mean);
  auto base = generator->decode(trace, Variant::BaseIndex);
  return torch::equal(mean, base);
}

void SweepTable::write_csv(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "variant,K,fid,lpips_proxy,duplicate_equal,error\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%d,%s\n", to_string(r.variant).c_str(), r.shots, r.fid,
                  r.lpips_proxy, r.duplicate_equal ? 1 : 0, r.error.c_str());
    out << buf;
  }
}

json SweepTable::to_json() const {
  json list = json::array();
  for (const auto& r : rows) {
    list.push_back({{"variant", to_string(r.variant)},
                    {"K", r.shots},
                    {"fid", r.fid},
                    {"lpips_proxy", r.lpips_proxy},
                    {"duplicate_equal", r.duplicate_equal},
                    {"error", r.error}});
  }
  return {{"rows", list}, {"base_fid_variance", base_fid_variance}, {"mean_fid_slope", mean_fid_slope}};
}

SweepTable shot_sweep(const std::vector<int>& shots, const std::function<SweepRow(int, Variant)>& pipeline) {
  SweepTable table;
  for (auto variant : {Variant::Mean, Variant::BaseIndex}) {
    for (int k : shots) {
      SweepRow row;
      try {
        row = pipeline(k, variant);
      } catch (const std::exception& e) {
        row = SweepRow{};
        row.error = e.what();
        std::cerr << "[warn] sweep K=" << k << " " << to_string(variant) << " failed: " << e.what() << '\n';
      }
      row.variant = variant;
      row.shots = k;
      table.rows.push_back(row);
    }
  }
  std::vector<double> base_fid, mean_k, mean_fid;
  for (const auto& r : table.rows) {
    if (!r.error.empty()) continue;
    if (r.variant == Variant::BaseIndex) base_fid.push_back(r.fid);
    if (r.variant == Variant::Mean) {
      mean_k.push_back(r.shots);
      mean_fid.push_back(r.fid);
    }
  }
  if (base_fid.size() > 1) {
    const double mu = std::accumulate(base_fid.begin(), base_fid.end(), 0.0) / base_fid.size();
    double var = 0.0;
    for (double f : base_fid) var += (f - mu) * (f - mu);
    table.base_fid_variance = var / (base_fid.size() - 1);
  }
  if (mean_k.size() > 1) {
    const double kx = std::accumulate(mean_k.begin(), mean_k.end(), 0.0) / mean_k.size();
    const double fy = std::accumulate(mean_fid.begin(), mean_fid.end(), 0.0) / mean_fid.size();
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < mean_k.size(); ++i) {
      num += (mean_k[i] - kx) * (mean_fid[i] - fy);
      den += (mean_k[i] - kx) * (mean_k[i] - kx);
    }
    table.mean_fid_slope = den > 0.0 ? num / den : 0.0;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Augmentation for classification

namespace {

class ClassifierImpl : public torch::nn::Module {
 public:
  ClassifierImpl(int in_channels, int num_classes) {
    stem = register_module("stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 16, 3).padding(1)));
    block1 = register_module("block1", ResidualBlock(16, 32, 0.2));
    block2 = register_module("block2", ResidualBlock(32, 64, 0.2));
    head = register_module("head", torch::nn::Linear(64, num_classes));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto h = block2(block1(stem(x)));
    return head(torch::relu(h).mean({2, 3}));
  }

  torch::nn::Conv2d stem{nullptr};
  ResidualBlock block1{nullptr}, block2{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Classifier);

double accuracy(Classifier& model, const torch::Tensor& x, const torch::Tensor& y) {
  torch::NoGradGuard no_grad;
  model->eval();
  auto pred = model->forward(x).argmax(1);
  return pred.eq(y).to(torch::kFloat64).mean().item<double>();
}

double train_classifier(const torch::Tensor& train_x, const torch::Tensor& train_y, const torch::Tensor& val_x,
                        const torch::Tensor& val_y, const torch::Tensor& test_x, const torch::Tensor& test_y,
                        int num_classes, int epochs, std::uint64_t seed) {
  torch::manual_seed(seed);
  Classifier model(static_cast<int>(train_x.size(1)), num_classes);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(1e-3));
  std::mt19937_64 rng(seed);
  std::vector<int64_t> order(train_x.size(0));
  std::iota(order.begin(), order.end(), 0);
  constexpr int64_t kBatch = 16;
  double best_val = -1.0, test_at_best = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    model->train();
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += kBatch) {
      const auto end = std::min(order.size(), start + kBatch);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end), torch::kLong);
      opt.zero_grad();
      auto loss = torch::cross_entropy_loss(model->forward(train_x.index_select(0, idx)), train_y.index_select(0, idx));
      loss.backward();
      opt.step();
    }
    const double val = accuracy(model, val_x, val_y);
    if (val > best_val) {
      best_val = val;
      test_at_best = accuracy(model, test_x, test_y);
    }
  }
  return test_at_best;
}

}  // namespace

std::vector<AugmentRow> augment_classify(const ImageDataset& unseen, Generator& generator,
                                         const AugmentOptions& options, const std::string& dataset_name) {
  const int needed = options.train_per_class + options.val_per_class + options.test_per_class;
  if (options.train_per_class < 1 || options.val_per_class < 1 || options.test_per_class < 1) {
    throw std::invalid_argument("augment_classify: split sizes must be positive");
  }
  std::mt19937_64 rng(options.seed);
  struct Split3 {
    std::vector<torch::Tensor> train, val, test;
    int label = 0;
    const ClassImages* source = nullptr;
  };
  std::vector<Split3> splits;
  int excluded = 0;
  for (const auto& cls : unseen.classes()) {
    if (static_cast<int>(cls.images.size()) < needed) {
      ++excluded;
      continue;
    }
    std::vector<size_t> order(cls.images.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    Split3 s;
    s.label = static_cast<int>(splits.size());
    s.source = &cls;
    for (int i = 0; i < needed; ++i) {
      const auto& img = cls.images[order[i]];
      if (i < options.train_per_class) {
        s.train.push_back(img);
      } else if (i < options.train_per_class + options.val_per_class) {
        s.val.push_back(img);
      } else {
        s.test.push_back(img);
      }
    }
    splits.push_back(std::move(s));
  }
  if (splits.size() < 2) throw std::invalid_argument("augment_classify: fewer than two usable classes");
  if (excluded > 0) std::cerr << "[warn] augment_classify: " << excluded << " class(es) excluded\n";

  auto stack_split = [&](auto member) {
    std::vector<torch::Tensor> xs;
    std::vector<int64_t> ys;
    for (const auto& s : splits) {
      for (const auto& img : s.*member) {
        xs.push_back(img);
        ys.push_back(s.label);
      }
    }
    return std::make_pair(torch::stack(xs, 0), torch::tensor(ys, torch::kLong));
  };
  const auto [val_x, val_y] = stack_split(&Split3::val);
  const auto [test_x, test_y] = stack_split(&Split3::test);
  const auto [base_x, base_y] = stack_split(&Split3::train);

  std::vector<AugmentRow> rows;
  for (const auto& [condition, extra] : options.conditions) {
    std::vector<torch::Tensor> xs{base_x};
    std::vector<torch::Tensor> ys{base_y};
    if (extra > 0) {
      std::mt19937_64 aug_rng(options.seed + 1);
      for (const auto& s : splits) {
        torch::Tensor more;
        if (condition == "copies") {
          std::vector<torch::Tensor> copies;
          for (int i = 0; i < extra; ++i) {
            copies.push_back(s.train[std::uniform_int_distribution<size_t>(0, s.train.size() - 1)(aug_rng)]);
          }
          more = torch::stack(copies, 0);
        } else {
          torch::NoGradGuard no_grad;
          EvalModeGuard eval(*generator);
          ClassImages train_only;
          train_only.name = s.source->name;
          train_only.images = s.train;
          train_only.keys.resize(s.train.size());
          more = generate_from_class(generator, train_only, options.shots, extra, aug_rng, std::nullopt);
        }
        xs.push_back(more.to(base_x.dtype()));
        ys.push_back(torch::full({more.size(0)}, s.label, torch::kLong));
      }
    }
    const double acc = train_classifier(torch::cat(xs, 0), torch::cat(ys, 0), val_x, val_y, test_x, test_y,
                                        static_cast<int>(splits.size()), options.epochs, options.seed);
    rows.push_back({condition, dataset_name, acc, excluded});
  }
  return rows;
}

void write_augment_table(const std::vector<AugmentRow>& rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "condition,dataset,accuracy\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f\n", r.condition.c_str(), r.dataset.c_str(), r.accuracy);
    out << buf;
  }
}

}  // namespace wavegan
