#include "wavegan/data_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace wavegan {

using nlohmann::json;

namespace {

std::atomic<ReadAudit*> g_active_audit{nullptr};

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

Split split_from_string(const std::string& s) {
  if (s == "seen") return Split::Seen;
  if (s == "unseen") return Split::Unseen;
  throw DataError("manifest: unknown split '" + s + "'");
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::Train;
  if (s == "support") return Partition::Support;
  if (s == "query") return Partition::Query;
  throw DataError("manifest: unknown partition '" + s + "'");
}

std::string class_of(const std::string& image_key) {
  const auto slash = image_key.find('/');
  if (slash == std::string::npos) throw DataError("manifest: image key '" + image_key + "' has no class folder");
  return image_key.substr(0, slash);
}

}  // namespace

std::string to_string(Split s) { return s == Split::Seen ? "seen" : "unseen"; }

std::string to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Support: return "support";
    case Partition::Query: return "query";
  }
  return "?";
}

std::vector<std::string> SplitManifest::classes_in(Split split) const {
  std::vector<std::string> out;
  for (const auto& [name, s] : classes) {
    if (s == split) out.push_back(name);
  }
  return out;
}

std::vector<std::string> SplitManifest::images_of(const std::string& class_name) const {
  std::vector<std::string> out;
  const std::string prefix = class_name + "/";
  for (auto it = images.lower_bound(prefix); it != images.end() && it->first.starts_with(prefix); ++it) {
    out.push_back(it->first);
  }
  return out;
}

std::vector<std::string> SplitManifest::images_of(const std::string& class_name, Partition partition) const {
  std::vector<std::string> out;
  for (const auto& key : images_of(class_name)) {
    if (images.at(key) == partition) out.push_back(key);
  }
  return out;
}

void SplitManifest::invalidate(const std::string& image) { images.erase(image); }

void SplitManifest::validate() const {
  if (version != kManifestVersion) throw DataError("manifest: unsupported version " + std::to_string(version));
  for (const auto& [key, partition] : images) {
    const auto cls = class_of(key);
    auto it = classes.find(cls);
    if (it == classes.end()) throw DataError("manifest: image '" + key + "' belongs to no listed class");
    const bool seen = it->second == Split::Seen;
    if (seen != (partition == Partition::Train)) {
      throw DataError("manifest: image '" + key + "' has partition " + to_string(partition) + " in a " +
                      to_string(it->second) + " class");
    }
  }
}

json SplitManifest::to_json() const {
  json j;
  j["version"] = version;
  j["seed"] = seed;
  json cls = json::object();
  for (const auto& [name, s] : classes) cls[name] = to_string(s);
  json img = json::object();
  for (const auto& [key, p] : images) img[key] = to_string(p);
  j["classes"] = std::move(cls);
  j["images"] = std::move(img);
  return j;
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, s] : j.at("classes").items()) m.classes[name] = split_from_string(s.get<std::string>());
    for (const auto& [key, p] : j.at("images").items()) m.images[key] = partition_from_string(p.get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: malformed: ") + e.what());
  }
  m.validate();
  return m;
}

std::string SplitManifest::serialize() const { return to_json().dump(2) + "\n"; }

void SplitManifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << serialize();
  }
  fs::rename(tmp, path);
}

SplitManifest SplitManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::vector<std::string> list_class_images(const fs::path& root, const std::string& class_name) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root / class_name)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      out.push_back(class_name + "/" + entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

SplitManifest build_manifest(const fs::path& root, int seen, int unseen, double support_fraction,
                             std::uint64_t seed) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  if (seen < 1 || unseen < 1) throw DataError("need at least one seen and one unseen class");
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw DataError("support fraction must lie in (0, 1)");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (static_cast<int>(names.size()) < seen + unseen) {
    throw DataError("dataset has " + std::to_string(names.size()) + " classes, split needs " +
                    std::to_string(seen + unseen));
  }

  std::mt19937_64 rng(seed);
  std::shuffle(names.begin(), names.end(), rng);

  SplitManifest m;
  m.seed = seed;
  for (int i = 0; i < seen + unseen; ++i) {
    const auto& name = names[i];
    const bool is_seen = i < seen;
    auto files = list_class_images(root, name);
    if (files.empty()) throw DataError("class '" + name + "' has no images");
    m.classes[name] = is_seen ? Split::Seen : Split::Unseen;
    if (is_seen) {
      for (const auto& f : files) m.images[f] = Partition::Train;
      continue;
    }
    if (files.size() < 2) throw DataError("unseen class '" + name + "' needs at least two images");
    std::shuffle(files.begin(), files.end(), rng);
    const auto n = static_cast<int>(files.size());
    const int support = std::clamp(static_cast<int>(std::lround(support_fraction * n)), 1, n - 1);
    for (int k = 0; k < n; ++k) m.images[files[k]] = k < support ? Partition::Support : Partition::Query;
  }
  return m;
}

void ReadAudit::record(const std::string& path) {
  std::lock_guard lock(mutex_);
  paths_.insert(path);
}

std::set<std::string> ReadAudit::paths() const {
  std::lock_guard lock(mutex_);
  return paths_;
}

std::size_t ReadAudit::count() const {
  std::lock_guard lock(mutex_);
  return paths_.size();
}

ReadAuditScope::ReadAuditScope(ReadAudit& audit) : previous_(g_active_audit.exchange(&audit)) {}

ReadAuditScope::~ReadAuditScope() { g_active_audit.store(previous_); }

torch::Tensor load_image(const fs::path& path, int image_size) {
  if (auto* audit = g_active_audit.load()) audit->record(fs::weakly_canonical(path).string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  const int side = std::min(bgr.rows, bgr.cols);
  cv::Mat square = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side));
  cv::Mat sized;
  if (side == image_size) {
    sized = square.clone();
  } else {
    cv::resize(square, sized, cv::Size(image_size, image_size), 0, 0,
               side > image_size ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  cv::Mat rgb;
  cv::cvtColor(sized, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {image_size, image_size, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

void save_image(const torch::Tensor& image, const fs::path& path) {
  if (image.dim() != 3 || image.size(0) != 3) throw DataError("save_image: expected a (3, H, W) tensor");
  auto bytes = image.detach()
                   .to(torch::kFloat32)
                   .clamp(-1.0, 1.0)
                   .add(1.0)
                   .mul(127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

struct ImageDataset::Bookkeeping {
  std::mutex mutex;
  std::set<int> warned_shots;
  std::set<std::string> touched;
};

ImageDataset::ImageDataset() : book_(std::make_unique<Bookkeeping>()) {}

ImageDataset::ImageDataset(std::vector<ClassImages> classes)
    : classes_(std::move(classes)), book_(std::make_unique<Bookkeeping>()) {}

ImageDataset::ImageDataset(ImageDataset&&) noexcept = default;
ImageDataset& ImageDataset::operator=(ImageDataset&&) noexcept = default;
ImageDataset::~ImageDataset() = default;

std::size_t ImageDataset::num_images() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.images.size();
  return n;
}

bool ImageDataset::contains_split(Split split) const {
  return std::any_of(classes_.begin(), classes_.end(), [&](const ClassImages& c) { return c.split == split; });
}

std::vector<int> ImageDataset::eligible_classes(int shots) const {
  std::vector<int> out;
  std::vector<std::string> dropped;
  for (int i = 0; i < static_cast<int>(classes_.size()); ++i) {
    if (static_cast<int>(classes_[i].images.size()) >= shots) {
      out.push_back(i);
    } else {
      dropped.push_back(classes_[i].name);
    }
  }
  if (!dropped.empty()) {
    std::lock_guard lock(book_->mutex);
    if (book_->warned_shots.insert(shots).second) {
      std::cerr << "[warn] " << dropped.size() << " class(es) have fewer than " << shots
                << " images and are excluded from sampling\n";
    }
  }
  return out;
}

std::set<std::string> ImageDataset::touched() const {
  std::lock_guard lock(book_->mutex);
  return book_->touched;
}

void ImageDataset::mark_touched(const std::vector<std::string>& keys) const {
  std::lock_guard lock(book_->mutex);
  book_->touched.insert(keys.begin(), keys.end());
}

ImageDataset load_dataset(const fs::path& root, SplitManifest& manifest, Split split,
                          const std::set<Partition>& partitions, int image_size) {
  std::vector<ClassImages> classes;
  int label = 0;
  for (const auto& name : manifest.classes_in(split)) {
    ClassImages c;
    c.name = name;
    c.label = label++;
    c.split = split;
    for (const auto& key : manifest.images_of(name)) {
      if (!partitions.count(manifest.images.at(key))) continue;
      try {
        c.images.push_back(load_image(root / key, image_size));
        c.keys.push_back(key);
      } catch (const DataError& e) {
        std::cerr << "[warn] skipping " << key << ": " << e.what() << '\n';
        manifest.invalidate(key);
      }
    }
    classes.push_back(std::move(c));
  }
  return ImageDataset(std::move(classes));
}

void write_synthetic_dataset(const fs::path& root, int classes, int images_per_class, int image_size,
                             std::uint64_t seed) {
  if (classes < 1 || images_per_class < 1 || image_size < 4) throw DataError("invalid synthetic dataset shape");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const double S = image_size;
  for (int c = 0; c < classes; ++c) {
    // Class identity: two stripe colours, a blob colour, stripe angle and frequency.
    std::array<std::array<double, 3>, 3> palette{};
    for (auto& colour : palette) {
      for (auto& v : colour) v = unit(rng);
    }
    const double angle = std::numbers::pi * c / classes;
    const double freq = 2.0 + (c % 4) * 1.5;
    char dir[32];
    std::snprintf(dir, sizeof dir, "class_%03d", c);
    fs::create_directories(root / dir);
    for (int i = 0; i < images_per_class; ++i) {
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      const double jitter = (unit(rng) - 0.5) * 0.3;
      const double cx = S * (0.25 + 0.5 * unit(rng));
      const double cy = S * (0.25 + 0.5 * unit(rng));
      const double radius = S * (0.12 + 0.12 * unit(rng));
      auto img = torch::empty({3, image_size, image_size}, torch::kFloat32);
      auto acc = img.accessor<float, 3>();
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          const double u = (x * std::cos(angle + jitter) + y * std::sin(angle + jitter)) / S;
          const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * freq * u + phase);
          const bool in_blob = (x - cx) * (x - cx) + (y - cy) * (y - cy) < radius * radius;
          for (int ch = 0; ch < 3; ++ch) {
            double v = in_blob ? palette[2][ch] : palette[0][ch] * t + palette[1][ch] * (1.0 - t);
            v = std::clamp(v + noise(rng), 0.0, 1.0);
            acc[ch][y][x] = static_cast<float>(v * 2.0 - 1.0);
          }
        }
      }
      char file[32];
      std::snprintf(file, sizeof file, "img_%04d.png", i);
      save_image(img, root / dir / file);
    }
  }
}

}  // namespace wavegan
