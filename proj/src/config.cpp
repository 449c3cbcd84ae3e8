#include "wavegan/config.hpp"

#include <fstream>
#include <set>

namespace wavegan {

using nlohmann::json;

std::string to_string(Variant v) { return v == Variant::Mean ? "mean" : "base_index"; }

Variant variant_from_string(const std::string& name) {
  if (name == "mean" || name == "M") return Variant::Mean;
  if (name == "base_index" || name == "B") return Variant::BaseIndex;
  throw ConfigError("unknown variant '" + name + "' (expected mean or base_index)");
}

void GeneratorConfig::validate() const {
  if (image_size < 16 || (image_size & (image_size - 1)) != 0) {
    throw ConfigError("generator.image_size must be a power of two >= 16");
  }
  if (channels.size() != 5) throw ConfigError("generator.channels needs five entries");
  for (int c : channels) {
    if (c < 1) throw ConfigError("generator.channels entries must be positive");
  }
  if (in_channels < 1) throw ConfigError("generator.in_channels must be positive");
  if (use_hf_skip && hf_band_mask.without(Band::LL).empty()) {
    throw ConfigError("generator.hf_band_mask selects no detail band");
  }
  if (!(fusion.fused_fraction > 0.0 && fusion.fused_fraction <= 1.0)) {
    throw ConfigError("generator.fused_fraction must lie in (0, 1]");
  }
  if (fusion.top_n < 1) throw ConfigError("generator.top_n must be >= 1");
}

void DiscriminatorConfig::validate() const {
  if (channels.size() != 5) throw ConfigError("discriminator.channels needs five entries");
  for (int c : channels) {
    if (c < 1) throw ConfigError("discriminator.channels entries must be positive");
  }
}

void LossWeights::validate() const {
  for (double w : {lambda_cls_g, lambda_cls_d, lambda_fre, lambda_rec}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  }
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be positive");
  if (batch_episodes < 1) throw ConfigError("train.batch_episodes must be positive");
  if (shots < 2) throw ConfigError("train.shots must be >= 2");
  if (lr < 0.0) throw ConfigError("train.lr must be nonnegative");
  if (decay_start() >= iterations) throw ConfigError("train.decay_start_iteration must be < iterations");
  if (checkpoint_interval < 1) throw ConfigError("train.checkpoint_interval must be positive");
}

void ModelConfig::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("unsupported config version " + std::to_string(version));
  }
  generator.validate();
  discriminator.validate();
  loss.validate();
  train.validate();
}

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + where_ + "." + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const ModelConfig& c) {
  json j;
  j["version"] = c.version;
  j["generator"] = {
      {"image_size", c.generator.image_size},
      {"in_channels", c.generator.in_channels},
      {"channels", c.generator.channels},
      {"variant", to_string(c.generator.variant)},
      {"use_ll_skip", c.generator.use_ll_skip},
      {"use_hf_skip", c.generator.use_hf_skip},
      {"use_lof", c.generator.use_lof},
      {"hf_band_mask", c.generator.hf_band_mask.to_string()},
      {"fused_fraction", c.generator.fusion.fused_fraction},
      {"top_n", c.generator.fusion.top_n},
      {"leaky_slope", c.generator.leaky_slope},
  };
  j["discriminator"] = {
      {"channels", c.discriminator.channels},
      {"leaky_slope", c.discriminator.leaky_slope},
  };
  j["loss"] = {
      {"lambda_cls_g", c.loss.lambda_cls_g},
      {"lambda_cls_d", c.loss.lambda_cls_d},
      {"lambda_fre", c.loss.lambda_fre},
      {"lambda_rec", c.loss.lambda_rec},
  };
  j["train"] = {
      {"iterations", c.train.iterations},
      {"batch_episodes", c.train.batch_episodes},
      {"shots", c.train.shots},
      {"lr", c.train.lr},
      {"decay_start_iteration", c.train.decay_start_iteration},
      {"beta1", c.train.beta1},
      {"beta2", c.train.beta2},
      {"seed", c.train.seed},
      {"checkpoint_interval", c.train.checkpoint_interval},
  };
  j["data"] = {
      {"root", c.data.root},
      {"manifest", c.data.manifest},
      {"seen_classes", c.data.seen_classes},
      {"unseen_classes", c.data.unseen_classes},
      {"support_fraction", c.data.support_fraction},
      {"split_seed", c.data.split_seed},
  };
  j["eval"] = {
      {"images_per_class", c.eval.images_per_class},
      {"shots", c.eval.shots},
      {"seed", c.eval.seed},
      {"embedder_seed", c.eval.embedder_seed},
      {"sweep_shots", c.eval.sweep_shots},
      {"cls_train", c.eval.cls_train},
      {"cls_val", c.eval.cls_val},
      {"cls_test", c.eval.cls_test},
      {"cls_augment", c.eval.cls_augment},
      {"cls_epochs", c.eval.cls_epochs},
  };
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  StrictObject top(j, "config");
  top.get("version", c.version);
  if (c.version != kConfigVersion) {
    throw ConfigError("unsupported config version " + std::to_string(c.version));
  }

  if (auto* g = top.child("generator")) {
    StrictObject o(*g, "generator");
    std::string variant = to_string(c.generator.variant);
    std::string mask = c.generator.hf_band_mask.to_string();
    o.get("image_size", c.generator.image_size);
    o.get("in_channels", c.generator.in_channels);
    o.get("channels", c.generator.channels);
    o.get("variant", variant);
    o.get("use_ll_skip", c.generator.use_ll_skip);
    o.get("use_hf_skip", c.generator.use_hf_skip);
    o.get("use_lof", c.generator.use_lof);
    o.get("hf_band_mask", mask);
    o.get("fused_fraction", c.generator.fusion.fused_fraction);
    o.get("top_n", c.generator.fusion.top_n);
    o.get("leaky_slope", c.generator.leaky_slope);
    o.finish();
    c.generator.variant = variant_from_string(variant);
    c.generator.hf_band_mask = BandMask::parse(mask);
  }
  if (auto* d = top.child("discriminator")) {
    StrictObject o(*d, "discriminator");
    o.get("channels", c.discriminator.channels);
    o.get("leaky_slope", c.discriminator.leaky_slope);
    o.finish();
  }
  if (auto* l = top.child("loss")) {
    StrictObject o(*l, "loss");
    o.get("lambda_cls_g", c.loss.lambda_cls_g);
    o.get("lambda_cls_d", c.loss.lambda_cls_d);
    o.get("lambda_fre", c.loss.lambda_fre);
    o.get("lambda_rec", c.loss.lambda_rec);
    o.finish();
  }
  if (auto* t = top.child("train")) {
    StrictObject o(*t, "train");
    o.get("iterations", c.train.iterations);
    o.get("batch_episodes", c.train.batch_episodes);
    o.get("shots", c.train.shots);
    o.get("lr", c.train.lr);
    o.get("decay_start_iteration", c.train.decay_start_iteration);
    o.get("beta1", c.train.beta1);
    o.get("beta2", c.train.beta2);
    o.get("seed", c.train.seed);
    o.get("checkpoint_interval", c.train.checkpoint_interval);
    o.finish();
  }
  if (auto* d = top.child("data")) {
    StrictObject o(*d, "data");
    o.get("root", c.data.root);
    o.get("manifest", c.data.manifest);
    o.get("seen_classes", c.data.seen_classes);
    o.get("unseen_classes", c.data.unseen_classes);
    o.get("support_fraction", c.data.support_fraction);
    o.get("split_seed", c.data.split_seed);
    o.finish();
  }
  if (auto* e = top.child("eval")) {
    StrictObject o(*e, "eval");
    o.get("images_per_class", c.eval.images_per_class);
    o.get("shots", c.eval.shots);
    o.get("seed", c.eval.seed);
    o.get("embedder_seed", c.eval.embedder_seed);
    o.get("sweep_shots", c.eval.sweep_shots);
    o.get("cls_train", c.eval.cls_train);
    o.get("cls_val", c.eval.cls_val);
    o.get("cls_test", c.eval.cls_test);
    o.get("cls_augment", c.eval.cls_augment);
    o.get("cls_epochs", c.eval.cls_epochs);
    o.finish();
  }
  top.finish();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

ModelConfig apply_overrides(const ModelConfig& cfg, const std::vector<std::string>& overrides) {
  json j = to_json(cfg);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' is not of the form key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);

    json* node = &j;
    size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || (node->is_string() && !value.is_string())) value = raw;
    *node = value;
  }
  return config_from_json(j);
}

}  // namespace wavegan
