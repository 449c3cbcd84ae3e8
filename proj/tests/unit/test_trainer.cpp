#include <doctest.h>

#include <fstream>
#include <sstream>

#include "scratch_dir.hpp"
#include "wavegan/trainer.hpp"

using namespace wavegan;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.generator.image_size = 16;
  cfg.generator.channels = {4, 6, 8, 8, 8};
  cfg.discriminator.channels = {4, 6, 8, 8, 8};
  cfg.train.iterations = 6;
  cfg.train.batch_episodes = 2;
  cfg.train.shots = 3;
  cfg.train.checkpoint_interval = 2;
  cfg.train.seed = 3;
  return cfg;
}

ImageDataset toy_dataset(int classes, int per_class, Split split = Split::Seen, std::uint64_t seed = 0) {
  torch::manual_seed(seed);
  std::vector<ClassImages> out;
  for (int c = 0; c < classes; ++c) {
    ClassImages ci;
    ci.name = "c" + std::to_string(c);
    ci.label = c;
    ci.split = split;
    for (int i = 0; i < per_class; ++i) {
      ci.images.push_back(torch::rand({3, 16, 16}) * 2 - 1);
      ci.keys.push_back(ci.name + "/" + std::to_string(i) + ".png");
    }
    out.push_back(std::move(ci));
  }
  return ImageDataset(std::move(out));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig t;
  t.iterations = 100;
  t.lr = 1e-4;
  CHECK(lr_schedule(0, t) == 1e-4);
  CHECK(lr_schedule(50, t) == 1e-4);
  CHECK(lr_schedule(75, t) == doctest::Approx(5e-5));
  CHECK(lr_schedule(100, t) == 0.0);
  double prev = lr_schedule(0, t);
  for (int s = 1; s <= 100; ++s) {
    const double cur = lr_schedule(s, t);
    CHECK(cur <= prev);
    CHECK(prev - cur <= 1e-4 / 50 + 1e-15);
    prev = cur;
  }
  t.decay_start_iteration = 10;
  CHECK(lr_schedule(55, t) == doctest::Approx(5e-5));
}

TEST_CASE("episode sampling") {
  auto ds = toy_dataset(3, 4);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 30; ++i) {
    auto ep = sample_episode(ds, 3, rng);
    CHECK(ep.images.sizes() == torch::IntArrayRef({3, 3, 16, 16}));
    std::set<std::string> keys(ep.keys.begin(), ep.keys.end());
    CHECK(keys.size() == 3);
    for (const auto& k : keys) CHECK(k.rfind(ep.class_name + "/", 0) == 0);
  }
  CHECK_THROWS_AS(sample_episode(ds, 5, rng), EpisodeError);
  CHECK_THROWS_AS(sample_episode(ds, 1, rng), EpisodeError);
  CHECK(ds.touched().size() == 12);
}

TEST_CASE("training step reports finite, recomposable losses") {
  auto ds = toy_dataset(3, 4);
  Trainer t(tiny_config(), 3);
  auto m = t.train_step(t.sample_batch(ds));
  CHECK(m.step == 0);
  CHECK(t.step() == 1);
  for (double v : {m.l_adv_g, m.l_adv_d, m.l_cls_g, m.l_cls_d, m.l_fre, m.l_rec}) CHECK(std::isfinite(v));
  LossWeights w;
  CHECK(std::abs(m.l_g - (m.l_adv_g + m.l_cls_g + m.l_fre + m.l_rec)) < 1e-6);
  CHECK(std::abs(m.l_d - (m.l_adv_d + m.l_cls_d)) < 1e-6);
  CHECK(m.l_adv_d == doctest::Approx(2.0).epsilon(0.5));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto ds = toy_dataset(2, 4);
  auto cfg = tiny_config();
  cfg.train.lr = 0.0;
  Trainer t(cfg, 2);
  std::vector<torch::Tensor> before;
  for (const auto& p : t.generator->parameters()) before.push_back(p.detach().clone());
  for (const auto& p : t.discriminator->parameters()) before.push_back(p.detach().clone());
  t.train_step(t.sample_batch(ds));
  size_t i = 0;
  for (const auto& p : t.generator->parameters()) CHECK(torch::equal(p, before[i++]));
  for (const auto& p : t.discriminator->parameters()) CHECK(torch::equal(p, before[i++]));
}

TEST_CASE("seeded trainers agree step for step") {
  auto ds = toy_dataset(3, 4);
  Trainer a(tiny_config(), 3), b(tiny_config(), 3);
  for (int s = 0; s < 3; ++s) {
    auto ma = a.train_step(a.sample_batch(ds));
    auto mb = b.train_step(b.sample_batch(ds));
    CHECK(ma.l_g == mb.l_g);
    CHECK(ma.l_d == mb.l_d);
  }
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  ScratchDir dir("resume");
  auto ds = toy_dataset(3, 4);
  auto cfg = tiny_config();
  auto full = run_training(ds, cfg, dir / "full");
  REQUIRE(full.completed);
  REQUIRE(full.final_checkpoint);

  TrainingOptions stop;
  stop.stop_at_step = 3;
  auto first = run_training(ds, cfg, dir / "split", stop);
  CHECK_FALSE(first.completed);
  auto entries = read_checkpoint_manifest(dir / "split");
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].step == 2);
  auto second = run_training(ds, cfg, dir / "split");
  CHECK(second.completed);
  CHECK(second.resumed_from == 2);
  CHECK(slurp(dir / "full" / "metrics.csv") == slurp(dir / "split" / "metrics.csv"));

  auto rows = MetricsWriter::read(dir / "full" / "metrics.csv");
  CHECK(rows.size() == 6);
  CHECK(slurp(dir / "full" / "metrics.csv").rfind(MetricsWriter::kHeader, 0) == 0);

  auto fin = final_checkpoint(dir / "full");
  REQUIRE(fin);
  CHECK(fin->filename() == "6.ckpt");
  auto restored = Trainer::load_checkpoint(*fin);
  CHECK(restored.step() == 6);
  CHECK(restored.num_classes() == 3);
  auto again = run_training(ds, cfg, dir / "full");
  CHECK(again.completed);
  CHECK(again.metrics.empty());
}

TEST_CASE("checkpoint round trip preserves weights and sampling state") {
  ScratchDir dir("ckpt");
  auto ds = toy_dataset(2, 4);
  Trainer t(tiny_config(), 2);
  t.train_step(t.sample_batch(ds));
  t.save_checkpoint(dir / "1.ckpt", false);
  auto r = Trainer::load_checkpoint(dir / "1.ckpt");
  auto pa = t.generator->named_parameters();
  auto pb = r.generator->named_parameters();
  for (const auto& item : pa) CHECK(torch::equal(item.value(), pb[item.key()]));
  auto ma = t.train_step(t.sample_batch(ds));
  auto mb = r.train_step(r.sample_batch(ds));
  CHECK(ma.l_g == mb.l_g);
  CHECK_THROWS(Trainer::load_checkpoint(dir / "missing.ckpt"));
}

TEST_CASE("training refuses unseen classes") {
  ScratchDir dir("leak");
  auto ds = toy_dataset(2, 4, Split::Unseen);
  CHECK_THROWS_AS(run_training(ds, tiny_config(), dir.path()), DataError);
}
