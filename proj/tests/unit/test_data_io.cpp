#include <doctest.h>

#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "scratch_dir.hpp"
#include "wavegan/data_io.hpp"

using namespace wavegan;

namespace {

void write_solid(const fs::path& path, int w, int h, cv::Scalar bgr) {
  fs::create_directories(path.parent_path());
  cv::imwrite(path.string(), cv::Mat(h, w, CV_8UC3, bgr));
}

}  // namespace

TEST_CASE("pixel range mapping") {
  ScratchDir dir("range");
  write_solid(dir / "white.png", 8, 8, {255, 255, 255});
  write_solid(dir / "black.png", 8, 8, {0, 0, 0});
  auto white = load_image(dir / "white.png", 8);
  auto black = load_image(dir / "black.png", 8);
  CHECK(white.sizes() == torch::IntArrayRef({3, 8, 8}));
  CHECK(white.eq(1.0).all().item<bool>());
  CHECK(black.eq(-1.0).all().item<bool>());
}

TEST_CASE("channel order is RGB") {
  ScratchDir dir("rgb");
  write_solid(dir / "red.png", 4, 4, {0, 0, 255});
  auto red = load_image(dir / "red.png", 4);
  CHECK(red[0].eq(1.0).all().item<bool>());
  CHECK(red[1].eq(-1.0).all().item<bool>());
  CHECK(red[2].eq(-1.0).all().item<bool>());
}

TEST_CASE("non-square images are centre cropped") {
  ScratchDir dir("crop");
  // 40x20 image: the centre crop keeps columns 10..29.
  cv::Mat img(20, 40, CV_8UC3, cv::Scalar(128, 128, 128));
  img(cv::Rect(0, 0, 10, 20)).setTo(cv::Scalar(255, 0, 0));   // blue, cropped away
  img(cv::Rect(30, 0, 10, 20)).setTo(cv::Scalar(255, 0, 0));  // blue, cropped away
  img.at<cv::Vec3b>(0, 10) = {0, 0, 255};                      // red, top-left of crop
  img.at<cv::Vec3b>(19, 29) = {0, 255, 0};                     // green, bottom-right of crop
  cv::imwrite((dir / "marker.png").string(), img);
  auto t = load_image(dir / "marker.png", 20);
  CHECK(t[0][0][0].item<float>() == 1.0f);
  CHECK(t[1][0][0].item<float>() == -1.0f);
  CHECK(t[1][19][19].item<float>() == 1.0f);
  CHECK(t[0][19][19].item<float>() == -1.0f);
  // No blue survives the crop.
  auto blue = t[2].eq(1.0f).logical_and(t[0].eq(-1.0f)).logical_and(t[1].eq(-1.0f));
  CHECK_FALSE(blue.any().item<bool>());

  auto small = load_image(dir / "marker.png", 10);
  CHECK(small.sizes() == torch::IntArrayRef({3, 10, 10}));
}

TEST_CASE("save and reload round trip within quantisation") {
  ScratchDir dir("roundtrip");
  torch::manual_seed(0);
  auto img = torch::rand({3, 16, 16}) * 2 - 1;
  save_image(img, dir / "x.png");
  auto back = load_image(dir / "x.png", 16);
  CHECK((back - img).abs().max().item<double>() <= 1.0 / 127.5 + 1e-6);
  CHECK_THROWS_AS(save_image(torch::rand({16, 16}), dir / "y.png"), DataError);
}

TEST_CASE("manifest split counts, disjointness and determinism") {
  ScratchDir dir("manifest");
  write_synthetic_dataset(dir / "data", 10, 8, 8, 1);
  auto m = build_manifest(dir / "data", 8, 2, 0.25, 7);
  CHECK(m.classes_in(Split::Seen).size() == 8);
  CHECK(m.classes_in(Split::Unseen).size() == 2);
  for (const auto& c : m.classes_in(Split::Unseen)) {
    CHECK(m.images_of(c, Partition::Support).size() == 2);
    CHECK(m.images_of(c, Partition::Query).size() == 6);
  }
  for (const auto& c : m.classes_in(Split::Seen)) CHECK(m.images_of(c, Partition::Train).size() == 8);
  CHECK_NOTHROW(m.validate());

  auto again = build_manifest(dir / "data", 8, 2, 0.25, 7);
  CHECK(again.serialize() == m.serialize());
  auto other = build_manifest(dir / "data", 8, 2, 0.25, 8);
  CHECK(other.serialize() != m.serialize());

  m.save(dir / "m.json");
  auto loaded = SplitManifest::load(dir / "m.json");
  CHECK(loaded.serialize() == m.serialize());

  CHECK_THROWS_AS(build_manifest(dir / "data", 9, 2, 0.25, 7), DataError);
  CHECK_THROWS_AS(build_manifest(dir / "missing", 1, 1, 0.25, 7), DataError);
}

TEST_CASE("flower-sized split") {
  ScratchDir dir("flower");
  for (int c = 0; c < 102; ++c) {
    for (int i = 0; i < 3; ++i) {
      write_solid(dir / ("c" + std::to_string(c)) / ("i" + std::to_string(i) + ".png"), 2, 2, {0, 0, 0});
    }
  }
  auto m = build_manifest(dir.path(), 85, 17, 0.25, 0);
  CHECK(m.classes_in(Split::Seen).size() == 85);
  CHECK(m.classes_in(Split::Unseen).size() == 17);
}

TEST_CASE("manifest validation catches broken invariants") {
  SplitManifest m;
  m.classes["a"] = Split::Seen;
  m.classes["b"] = Split::Unseen;
  m.images["a/1.png"] = Partition::Train;
  m.images["b/1.png"] = Partition::Support;
  CHECK_NOTHROW(m.validate());
  m.images["a/2.png"] = Partition::Query;
  CHECK_THROWS_AS(m.validate(), DataError);
  m.images.erase("a/2.png");
  m.images["c/1.png"] = Partition::Train;
  CHECK_THROWS_AS(m.validate(), DataError);
  auto j = SplitManifest{}.to_json();
  j["version"] = 42;
  CHECK_THROWS_AS(SplitManifest::from_json(j), DataError);
}

TEST_CASE("corrupt images are skipped and invalidated") {
  ScratchDir dir("corrupt");
  write_synthetic_dataset(dir / "data", 3, 4, 8, 2);
  auto m = build_manifest(dir / "data", 2, 1, 0.5, 0);
  const auto victim = m.classes_in(Split::Seen).front() + "/img_0001.png";
  std::ofstream(dir / "data" / victim) << "not an image";
  auto seen = load_dataset(dir / "data", m, Split::Seen, {Partition::Train}, 8);
  CHECK(seen.num_images() == 7);
  CHECK(m.images.count(victim) == 0);
  CHECK_FALSE(seen.contains_split(Split::Unseen));
}

TEST_CASE("dataset loading honours splits and records reads") {
  ScratchDir dir("load");
  write_synthetic_dataset(dir / "data", 4, 6, 8, 3);
  auto m = build_manifest(dir / "data", 2, 2, 0.5, 0);
  ReadAudit audit;
  {
    ReadAuditScope scope(audit);
    auto support = load_dataset(dir / "data", m, Split::Unseen, {Partition::Support}, 8);
    CHECK(support.num_classes() == 2);
    CHECK(support.num_images() == 6);
    for (const auto& c : support.classes()) {
      CHECK(c.split == Split::Unseen);
      for (const auto& k : c.keys) CHECK(m.images.at(k) == Partition::Support);
    }
  }
  CHECK(audit.count() == 6);
  auto outside = load_image(dir / "data" / m.images.begin()->first, 8);
  CHECK(audit.count() == 6);
}

TEST_CASE("eligible classes") {
  std::vector<ClassImages> classes(2);
  classes[0].images.resize(2, torch::zeros({3, 4, 4}));
  classes[1].images.resize(5, torch::zeros({3, 4, 4}));
  ImageDataset ds(std::move(classes));
  CHECK(ds.eligible_classes(3) == std::vector<int>{1});
  CHECK(ds.eligible_classes(2) == std::vector<int>{0, 1});
}
