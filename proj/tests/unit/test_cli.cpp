#include <doctest.h>

#include <fstream>
#include <sstream>

#include "scratch_dir.hpp"
#include "wavegan/cli.hpp"
#include "wavegan/config.hpp"

namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "wavegan");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return wavegan::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Toy dataset, split and a tiny model config under `dir`.
fs::path prepare(const ScratchDir& dir) {
  const auto out = dir.path().string();
  REQUIRE(run({"synth", "--out", out, "--run-id", "data", "--classes", "5", "--images", "12", "--size", "16"}) == 0);
  REQUIRE(run({"split", "--out", out, "--run-id", "split", "--set", "data.root=" + out + "/data/images", "--set",
               "data.seen_classes=3", "--set", "data.unseen_classes=2", "--set", "data.support_fraction=0.5"}) == 0);
  wavegan::ModelConfig cfg;
  cfg.generator.image_size = 16;
  cfg.generator.channels = {4, 6, 8, 8, 8};
  cfg.discriminator.channels = {4, 6, 8, 8, 8};
  cfg.train.iterations = 4;
  cfg.train.batch_episodes = 2;
  cfg.train.checkpoint_interval = 2;
  cfg.data.root = out + "/data/images";
  cfg.data.manifest = out + "/split/manifest.json";
  cfg.eval.images_per_class = 4;
  const auto path = dir / "tiny.json";
  wavegan::save_config(cfg, path);
  return path;
}

}  // namespace

TEST_CASE("cli pipeline commands") {
  ScratchDir dir("cli");
  const auto out = dir.path().string();
  const auto cfg = prepare(dir).string();

  CHECK(fs::exists(dir / "split" / "manifest.json"));
  CHECK(fs::exists(dir / "split" / "config.json"));
  CHECK_FALSE(fs::exists(dir / "split" / "INCOMPLETE"));

  REQUIRE(run({"train", "--out", out, "--run-id", "t1", "--config", cfg, "--seed", "5"}) == 0);
  REQUIRE(run({"train", "--out", out, "--run-id", "t2", "--config", cfg, "--seed", "5"}) == 0);
  CHECK(slurp(dir / "t1" / "metrics.csv") == slurp(dir / "t2" / "metrics.csv"));
  auto record = nlohmann::json::parse(slurp(dir / "t1" / "run.json"));
  CHECK(record["seed"] == 5);
  CHECK(record["status"] == "complete");
  CHECK(record.contains("version"));
  CHECK(wavegan::load_config(dir / "t1" / "config.json").train.seed == 5);

  CHECK(run({"train", "--out", out, "--run-id", "t1", "--config", cfg}) == 2);

  REQUIRE(run({"generate", "--out", out, "--run-id", "g", "--checkpoint", out + "/t1"}) == 0);
  auto gen = nlohmann::json::parse(slurp(dir / "g" / "run.json"));
  CHECK(gen["generation"]["query_reads"] == 0);
  CHECK(gen["generation"]["images_per_class"] == 4);

  REQUIRE(run({"evaluate", "--out", out, "--run-id", "e1", "--checkpoint", out + "/t1"}) == 0);
  REQUIRE(run({"evaluate", "--out", out, "--run-id", "e2", "--checkpoint", out + "/t1"}) == 0);
  CHECK(slurp(dir / "e1" / "metrics.csv") == slurp(dir / "e2" / "metrics.csv"));
  CHECK(slurp(dir / "e1" / "summary.json") == slurp(dir / "e2" / "summary.json"));

  REQUIRE(run({"decompose", "--out", out, "--run-id", "d", "--size", "16", "--image",
               out + "/data/images/class_000/img_0000.png"}) == 0);
  CHECK(fs::exists(dir / "d" / "grid.png"));
  CHECK(fs::exists(dir / "d" / "grid.json"));
}

TEST_CASE("cli ablation table") {
  ScratchDir dir("cli-ablate");
  const auto out = dir.path().string();
  const auto cfg = prepare(dir).string();
  REQUIRE(run({"ablate", "--out", out, "--run-id", "a", "--config", cfg, "--set", "train.iterations=2"}) == 0);
  std::ifstream in(dir / "a" / "ablation.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "condition,fid,lpips_proxy");
  for (const char* name : {"full,", "w/o LoF,", "w/o LL,", "w/o HL,", "w/o L1,"}) {
    CHECK(std::any_of(lines.begin(), lines.end(), [&](const std::string& l) { return l.rfind(name, 0) == 0; }));
  }
}

TEST_CASE("cli sweep") {
  ScratchDir dir("cli-sweep");
  const auto out = dir.path().string();
  const auto cfg = prepare(dir).string();
  REQUIRE(run({"sweep", "--out", out, "--run-id", "s", "--config", cfg, "--shots", "2,3", "--set",
               "train.iterations=2"}) == 0);
  auto table = nlohmann::json::parse(slurp(dir / "s" / "sweep.json"));
  CHECK(table["rows"].size() == 4);
  for (const auto& row : table["rows"]) CHECK(row["duplicate_equal"] == true);
}

TEST_CASE("cli errors") {
  ScratchDir dir("cli-errors");
  const auto out = dir.path().string();
  CHECK(run({"train", "--out", out, "--set", "train.bogus=1"}) == 2);
  CHECK(run({"generate", "--out", out}) == 2);
  CHECK(run({"evaluate", "--out", out, "--checkpoint", out + "/nowhere"}) != 0);
  CHECK(run({"train", "--out", out, "--run-id", "nodata", "--set", "data.root=" + out + "/missing"}) == 1);
  CHECK(fs::exists(dir / "nodata" / "INCOMPLETE"));
  CHECK(run({"split", "--out", out, "--config", out + "/absent.json"}) == 2);
  CHECK(run({}) != 0);
}
