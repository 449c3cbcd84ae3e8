#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace wavegan {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { Seen, Unseen };
/// Seen-class images are all Train; unseen-class images are Support or Query.
enum class Partition { Train, Support, Query };

std::string to_string(Split s);
std::string to_string(Partition p);

/// Class -> split and image -> partition assignment.  Image keys are paths
/// relative to the dataset root, "class/file.png".
struct SplitManifest {
  int version = kManifestVersion;
  std::uint64_t seed = 0;
  std::map<std::string, Split> classes;
  std::map<std::string, Partition> images;

  std::vector<std::string> classes_in(Split split) const;
  std::vector<std::string> images_of(const std::string& class_name) const;
  std::vector<std::string> images_of(const std::string& class_name, Partition partition) const;
  /// Drops an image that turned out to be unreadable.
  void invalidate(const std::string& image);
  /// Throws DataError when an invariant is broken (overlaps, bad partitions).
  void validate() const;

  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
  std::string serialize() const;
  void save(const fs::path& path) const;
  static SplitManifest load(const fs::path& path);
};

/// Sorted image files (png, jpg, jpeg, bmp, ppm) under root/class_name.
std::vector<std::string> list_class_images(const fs::path& root, const std::string& class_name);

/// Seeded split of the class folders under `root`: `seen` + `unseen` classes
/// are drawn (others ignored); each unseen class keeps round(support_fraction
/// * n) images (at least one) as support and the rest as query.
SplitManifest build_manifest(const fs::path& root, int seen, int unseen, double support_fraction,
                             std::uint64_t seed);

/// Records every path handed to load_image while a scope is active.
class ReadAudit {
 public:
  void record(const std::string& path);
  std::set<std::string> paths() const;
  std::size_t count() const;

 private:
  mutable std::mutex mutex_;
  std::set<std::string> paths_;
};

/// Installs `audit` as the active recorder for the lifetime of the scope.
class ReadAuditScope {
 public:
  explicit ReadAuditScope(ReadAudit& audit);
  ~ReadAuditScope();
  ReadAuditScope(const ReadAuditScope&) = delete;
  ReadAuditScope& operator=(const ReadAuditScope&) = delete;

 private:
  ReadAudit* previous_;
};

/// Decodes, centre-crops to a square, resizes to image_size and maps 8-bit
/// values to [-1, 1].  Returns (3, image_size, image_size) float, RGB order.
torch::Tensor load_image(const fs::path& path, int image_size);

/// Inverse mapping, written as an 8-bit RGB PNG.  image: (3, H, W) in [-1, 1].
void save_image(const torch::Tensor& image, const fs::path& path);

struct ClassImages {
  std::string name;
  int label = 0;
  Split split = Split::Seen;
  std::vector<std::string> keys;
  std::vector<torch::Tensor> images;
};

/// In-memory images of some classes and partitions.  Labels are dense indices
/// in class-name order.
class ImageDataset {
 public:
  ImageDataset();
  explicit ImageDataset(std::vector<ClassImages> classes);
  ImageDataset(ImageDataset&&) noexcept;
  ImageDataset& operator=(ImageDataset&&) noexcept;
  ~ImageDataset();

  const std::vector<ClassImages>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t num_images() const;
  bool contains_split(Split split) const;

  /// Classes with at least `shots` images; warns once per shot count about the rest.
  std::vector<int> eligible_classes(int shots) const;

  /// Image keys handed out through sample_episode so far.
  std::set<std::string> touched() const;
  void mark_touched(const std::vector<std::string>& keys) const;

 private:
  struct Bookkeeping;

  std::vector<ClassImages> classes_;
  std::unique_ptr<Bookkeeping> book_;
};

/// Loads the images of `split` classes restricted to `partitions`.
/// Unreadable files are skipped with a warning and invalidated in `manifest`.
ImageDataset load_dataset(const fs::path& root, SplitManifest& manifest, Split split,
                          const std::set<Partition>& partitions, int image_size);

/// Writes a toy class-folder dataset of striped, blob-marked RGB images.
void write_synthetic_dataset(const fs::path& root, int classes, int images_per_class, int image_size,
                             std::uint64_t seed);

}  // namespace wavegan
