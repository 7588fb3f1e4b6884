// Copyright 2026 The MIRL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mirl/probes/records.hpp"
#include "mirl/probes/sweep.hpp"
#include "mirl/training/model.hpp"
#include "mirl/training/pretrain.hpp"

namespace mirl {

/// A recognized configuration key. An empty default means the value is
/// derived (from the model preset, or from other keys).
struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* help;
};

// clang-format off
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"model.preset", "tiny-8", "encoder preset: tiny-8, ViT-S, ViT-B, ViT-S-54, ViT-B-24, ViT-B-48"},
      {"model.depth", "", "encoder blocks L"},
      {"model.hidden", "", "token width"},
      {"model.mlp", "", "MLP hidden width"},
      {"model.heads", "", "attention heads"},
      {"model.segments", "", "segment count G (1 or even, divides L)"},
      {"model.patch", "", "patch side P"},
      {"model.image_size", "", "square input side"},
      {"model.channels", "", "input channels C"},
      {"model.pos_embed", "learned", "learned or sincos"},
      {"decoder.blocks", "2", "blocks per decoder"},
      {"decoder.hidden", "128", "decoder width"},
      {"decoder.heads", "4", "decoder attention heads"},
      {"decoder.mlp_ratio", "4", "decoder MLP expansion"},
      {"decoder.did", "true", "cross-attention to earlier segment features"},
      {"decoder.shared_mask_token", "true", "one mask token for all decoders"},
      {"objective.mode", "mirl", "mirl, mae, multi_decoder, coarse_to_fine, fine_to_coarse"},
      {"objective.lambda", "", "comma list of loss weights; default 1/terms"},
      {"objective.dagger", "false", "use the omega-weighted pair loss variant"},
      {"objective.omega", "1", "weight of the main-only term in the variant"},
      {"objective.norm_pix", "false", "per-patch normalized pixel targets"},
      {"objective.sigma", "2", "Gaussian sigma for coarse targets"},
      {"objective.infonce", "false", "add the InfoNCE feature term"},
      {"objective.infonce_weight", "1", "weight of the InfoNCE term"},
      {"objective.tau", "0.2", "InfoNCE temperature"},
      {"objective.momentum", "0.996", "momentum encoder decay"},
      {"objective.infonce_blocks", "2", "feature predictor blocks"},
      {"objective.perceptual", "false", "add the perceptual term"},
      {"objective.perceptual_weight", "1", "weight of the perceptual term"},
      {"objective.layers", "0,1", "extractor layers compared"},
      {"objective.extractor_widths", "8,16", "synthetic extractor channel widths"},
      {"objective.extractor_seed", "7", "synthetic extractor seed"},
      {"objective.extractor_weights", "", "extractor checkpoint file; empty uses the synthetic one"},
      {"mask.ratio", "0.75", "masking ratio r in [0, 1)"},
      {"optim.base_lr", "1.5e-4", "base learning rate; peak = base * batch / 256"},
      {"optim.weight_decay", "0.05", "decoupled weight decay"},
      {"optim.beta1", "0.9", "AdamW beta1"},
      {"optim.beta2", "0.95", "AdamW beta2"},
      {"optim.eps", "1e-8", "AdamW epsilon"},
      {"optim.batch_size", "64", "images per step"},
      {"optim.warmup_epochs", "0", "linear warmup length"},
      {"optim.epochs", "1", "schedule length in epochs"},
      {"optim.steps", "0", "fixed step count; overrides optim.epochs when nonzero"},
      {"optim.schedule", "cosine", "cosine or step"},
      {"optim.clip", "0", "global gradient-norm clip; 0 disables"},
      {"data.source", "synthetic", "synthetic or directory"},
      {"data.path", "", "image directory for data.source=directory"},
      {"data.count", "2000", "training images"},
      {"data.test_count", "1000", "held-out images for probes and fine-tuning"},
      {"data.augment", "true", "random resized crop and flip during pre-training"},
      {"data.min_scale", "0.2", "smallest crop area fraction"},
      {"finetune.base_lr", "7.5e-4", "fine-tune base learning rate"},
      {"finetune.weight_decay", "0.05", "fine-tune weight decay"},
      {"finetune.beta1", "0.9", "fine-tune AdamW beta1"},
      {"finetune.beta2", "0.999", "fine-tune AdamW beta2"},
      {"finetune.batch_size", "64", "fine-tune batch size"},
      {"finetune.warmup_epochs", "1", "fine-tune warmup"},
      {"finetune.epochs", "10", "fine-tune length"},
      {"finetune.schedule", "cosine", "cosine or step"},
      {"finetune.layer_decay", "0.75", "layer-wise lr decay"},
      {"finetune.label_smoothing", "0.1", "label smoothing"},
      {"finetune.ema", "0.9998", "weight moving-average decay"},
      {"finetune.augment", "true", "random resized crop and flip"},
      {"probe.use_finetune", "false", "score probes by fine-tuning instead of a linear probe"},
      {"probe.epochs", "300", "linear probe full-batch steps"},
      {"probe.lr", "0.05", "linear probe learning rate"},
      {"probe.weight_decay", "1e-4", "linear probe weight decay"},
      {"probe.k", "", "tail blocks re-initialized per point; default 0, L/4, L/2, 3L/4, L"},
      {"probe.seeds", "1,2,3", "seeds per sweep point"},
      {"probe.mode", "mirl", "truncated pre-training objective: mae or mirl"},
      {"probe.keep", "4", "blocks kept for truncated pre-training"},
      {"probe.steps", "50", "steps recorded by the gradient-norm probe"},
      {"probe.blocks", "", "blocks recorded by the gradient-norm probe; empty = all"},
      {"probe.compare", "true", "also record a single-decoder baseline"},
      {"probe.images", "4", "images written by reconstruct"},
      {"probe.pair", "0", "decoder pair shown by reconstruct"},
      {"run.seed", "", "master seed; falls back to MIRL_SEED, then 0"},
      {"run.output_dir", "runs/default", "directory for all outputs"},
      {"run.checkpoint", "", "checkpoint consumed by finetune, probes and reconstruct"},
      {"run.resume", "", "checkpoint to resume pre-training from"},
      {"run.runnable", "true", "false marks a reference config that must not be run"},
      {"gradcheck.tolerance", "1e-5", "max relative error accepted by gradcheck"},
  };
  return keys;
}
// clang-format on

inline const ConfigKey* find_config_key(const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.key) return &k;
  return nullptr;
}

inline std::string valid_keys_list() {
  std::string out;
  for (const auto& k : config_keys()) out += std::string("\n  ") + k.key;
  return out;
}

/// Key/value pairs as written by the user, before validation.
using RawConfig = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline void set_config_value(RawConfig& raw, const std::string& key, const std::string& value) {
  if (!find_config_key(key)) {
    throw ConfigError("unknown config key '" + key + "'; valid keys are:" + valid_keys_list());
  }
  raw[key] = value;
}

/// Parses `section.key = value` lines. '#' starts a comment.
inline RawConfig parse_config_text(const std::string& text, const std::string& source = "config") {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    try {
      set_config_value(raw, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return raw;
}

inline RawConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Applies a `key=value` override.
inline void apply_override(RawConfig& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  set_config_value(raw, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class V, class F>
std::string join(const V& values, F fmt) {
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : ",") + fmt(v);
  return out;
}

inline Schedule parse_schedule(const std::string& key, const std::string& v) {
  if (v == "cosine") return Schedule::Cosine;
  if (v == "step") return Schedule::Step;
  throw ConfigError(key + ": expected cosine or step, got '" + v + "'");
}

inline const char* schedule_name(Schedule s) { return s == Schedule::Step ? "step" : "cosine"; }

/// Typed reader over a raw config with documented defaults.
class Reader {
 public:
  explicit Reader(const RawConfig& raw) : raw_(raw) {}

  bool has(const std::string& key) const {
    auto it = raw_.find(key);
    return it != raw_.end() && !it->second.empty();
  }
  std::string str(const std::string& key) const {
    auto it = raw_.find(key);
    if (it != raw_.end()) return it->second;
    return find_config_key(key)->default_value;
  }
  std::size_t size(const std::string& key) const { return parse_size(key, str(key)); }
  double num(const std::string& key) const { return parse_double(key, str(key)); }
  bool flag(const std::string& key) const { return parse_bool(key, str(key)); }
  std::vector<std::size_t> sizes(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(str(key))) out.push_back(parse_size(key, s));
    return out;
  }
  std::vector<double> nums(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : split_list(str(key))) out.push_back(parse_double(key, s));
    return out;
  }

 private:
  const RawConfig& raw_;
};

}  // namespace detail

struct DataConfig {
  std::string source = "synthetic";
  std::string path;
  std::size_t count = 2000;
  std::size_t test_count = 1000;
};

struct ProbeConfig {
  std::vector<std::size_t> k;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string mode = "mirl";
  std::size_t keep = 4;
  std::size_t steps = 50;
  std::vector<std::size_t> blocks;
  bool compare = true;
  std::size_t images = 4;
  std::size_t pair = 0;
};

/// Fully resolved run configuration.
struct RunConfig {
  ModelConfig model;
  PretrainOptions pretrain;
  FinetuneSpec finetune;
  EvalSpec eval;
  DataConfig data;
  ProbeConfig probe;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string checkpoint;
  std::string resume;
  bool runnable = true;
  double gradcheck_tolerance = 1e-5;
};

/// Fills defaults and checks cross-field constraints. `env_seed` is the
/// fallback for run.seed (normally the MIRL_SEED environment variable).
inline RunConfig validate_config(const RawConfig& raw,
                                 const char* env_seed = std::getenv("MIRL_SEED")) {
  for (const auto& entry : raw) {
    if (!find_config_key(entry.first)) {
      throw ConfigError("unknown config key '" + entry.first + "'; valid keys are:" +
                        valid_keys_list());
    }
  }
  detail::Reader r(raw);
  RunConfig cfg;

  auto& vit = cfg.model.vit;
  const auto preset = r.str("model.preset");
  if (!vit_preset(preset, vit)) {
    std::string names;
    for (const char* n : kVitPresetNames) names += std::string(" ") + n;
    throw ConfigError("model.preset '" + preset + "' is unknown; presets:" + names);
  }
  if (r.has("model.depth")) vit.depth = r.size("model.depth");
  if (r.has("model.hidden")) vit.hidden = r.size("model.hidden");
  if (r.has("model.mlp")) vit.mlp = r.size("model.mlp");
  if (r.has("model.heads")) vit.heads = r.size("model.heads");
  if (r.has("model.segments")) vit.segments = r.size("model.segments");
  if (r.has("model.patch")) vit.patch = r.size("model.patch");
  if (r.has("model.image_size")) vit.image_h = vit.image_w = r.size("model.image_size");
  if (r.has("model.channels")) vit.channels = r.size("model.channels");
  const auto pe = r.str("model.pos_embed");
  if (pe == "learned") {
    vit.pos_embed = PosEmbedKind::Learned;
  } else if (pe == "sincos") {
    vit.pos_embed = PosEmbedKind::SinCos;
  } else {
    throw ConfigError("model.pos_embed: expected learned or sincos, got '" + pe + "'");
  }

  auto& dec = cfg.model.decoder;
  dec.blocks = r.size("decoder.blocks");
  dec.hidden = r.size("decoder.hidden");
  dec.heads = r.size("decoder.heads");
  dec.mlp_ratio = r.size("decoder.mlp_ratio");
  dec.did = r.flag("decoder.did");
  dec.shared_mask_token = r.flag("decoder.shared_mask_token");

  auto& obj = cfg.model.objective;
  obj.mode = parse_objective_mode(r.str("objective.mode"));
  if (r.has("objective.lambda")) obj.lambda = r.nums("objective.lambda");
  if (r.flag("objective.dagger")) obj.dagger_omega = r.num("objective.omega");
  obj.norm_pix = r.flag("objective.norm_pix");
  obj.sigma = r.num("objective.sigma");
  obj.infonce = r.flag("objective.infonce");
  obj.infonce_weight = r.num("objective.infonce_weight");
  obj.tau = r.num("objective.tau");
  obj.momentum = r.num("objective.momentum");
  obj.infonce_blocks = r.size("objective.infonce_blocks");
  obj.perceptual = r.flag("objective.perceptual");
  obj.perceptual_weight = r.num("objective.perceptual_weight");
  const auto layers = r.sizes("objective.layers");
  obj.perceptual_layers = {layers.begin(), layers.end()};
  obj.extractor_widths = r.sizes("objective.extractor_widths");
  obj.extractor_seed = r.size("objective.extractor_seed");
  obj.extractor_weights = r.str("objective.extractor_weights");
  if (obj.sigma <= 0.0) throw ConfigError("objective.sigma must be positive");
  cfg.model.mask_ratio = r.num("mask.ratio");
  cfg.model.validate();
  if (!obj.lambda) {
    const std::size_t n = cfg.model.loss_terms();
    obj.lambda = std::vector<double>(n, 1.0 / static_cast<double>(n));
  }

  auto& o = cfg.pretrain.optim;
  o.base_lr = r.num("optim.base_lr");
  o.weight_decay = r.num("optim.weight_decay");
  o.beta1 = r.num("optim.beta1");
  o.beta2 = r.num("optim.beta2");
  o.eps = r.num("optim.eps");
  o.batch_size = r.size("optim.batch_size");
  o.warmup_epochs = r.num("optim.warmup_epochs");
  o.total_epochs = r.num("optim.epochs");
  o.fixed_steps = r.size("optim.steps");
  o.schedule = detail::parse_schedule("optim.schedule", r.str("optim.schedule"));
  o.clip = r.num("optim.clip");
  o.validate();
  cfg.pretrain.augment = r.flag("data.augment");
  cfg.pretrain.min_scale = r.num("data.min_scale");
  if (cfg.pretrain.min_scale <= 0.0 || cfg.pretrain.min_scale > 1.0) {
    throw ConfigError("data.min_scale must lie in (0, 1]");
  }

  cfg.data.source = r.str("data.source");
  cfg.data.path = r.str("data.path");
  cfg.data.count = r.size("data.count");
  cfg.data.test_count = r.size("data.test_count");
  if (cfg.data.source != "synthetic" && cfg.data.source != "directory") {
    throw ConfigError("data.source: expected synthetic or directory, got '" + cfg.data.source + "'");
  }
  if (cfg.data.source == "directory" && cfg.data.path.empty()) {
    throw ConfigError("data.source=directory requires data.path");
  }

  auto& f = cfg.finetune;
  f.optim.base_lr = r.num("finetune.base_lr");
  f.optim.weight_decay = r.num("finetune.weight_decay");
  f.optim.beta1 = r.num("finetune.beta1");
  f.optim.beta2 = r.num("finetune.beta2");
  f.optim.batch_size = r.size("finetune.batch_size");
  f.optim.warmup_epochs = r.num("finetune.warmup_epochs");
  f.optim.total_epochs = r.num("finetune.epochs");
  f.optim.schedule = detail::parse_schedule("finetune.schedule", r.str("finetune.schedule"));
  f.optim.validate();
  f.layer_decay = r.num("finetune.layer_decay");
  f.label_smoothing = r.num("finetune.label_smoothing");
  f.ema_decay = r.num("finetune.ema");
  f.augment = r.flag("finetune.augment");
  f.min_scale = cfg.pretrain.min_scale;
  if (f.layer_decay <= 0.0 || f.layer_decay > 1.0) {
    throw ConfigError("finetune.layer_decay must lie in (0, 1]");
  }
  if (f.label_smoothing < 0.0 || f.label_smoothing >= 1.0) {
    throw ConfigError("finetune.label_smoothing must lie in [0, 1)");
  }

  cfg.eval.use_finetune = r.flag("probe.use_finetune");
  cfg.eval.probe.epochs = r.size("probe.epochs");
  cfg.eval.probe.lr = r.num("probe.lr");
  cfg.eval.probe.weight_decay = r.num("probe.weight_decay");
  cfg.eval.finetune = cfg.finetune;

  auto& p = cfg.probe;
  p.k = r.sizes("probe.k");
  if (p.k.empty()) {
    for (std::size_t q = 0; q <= 4; ++q) {
      const std::size_t k = vit.depth * q / 4;
      if (p.k.empty() || p.k.back() != k) p.k.push_back(k);
    }
  }
  p.seeds.clear();
  for (auto s : r.sizes("probe.seeds")) p.seeds.push_back(s);
  if (p.seeds.empty()) throw ConfigError("probe.seeds must list at least one seed");
  p.mode = r.str("probe.mode");
  parse_truncation_mode(p.mode);
  p.keep = r.size("probe.keep");
  p.steps = r.size("probe.steps");
  p.blocks = r.sizes("probe.blocks");
  p.compare = r.flag("probe.compare");
  p.images = r.size("probe.images");
  p.pair = r.size("probe.pair");
  for (auto k : p.k) {
    if (k > vit.depth) {
      throw ConfigError("probe.k=" + std::to_string(k) + " exceeds model.depth=" +
                        std::to_string(vit.depth));
    }
  }
  for (auto b : p.blocks) {
    if (b >= vit.depth) {
      throw ConfigError("probe.blocks names block " + std::to_string(b) + " but model.depth=" +
                        std::to_string(vit.depth));
    }
  }
  if (p.keep == 0 || p.keep > vit.depth) {
    throw ConfigError("probe.keep=" + std::to_string(p.keep) + " must lie in [1, model.depth=" +
                      std::to_string(vit.depth) + "]");
  }

  if (r.has("run.seed")) {
    cfg.seed = r.size("run.seed");
  } else if (env_seed && *env_seed) {
    cfg.seed = detail::parse_size("MIRL_SEED", env_seed);
  }
  cfg.output_dir = r.str("run.output_dir");
  cfg.checkpoint = r.str("run.checkpoint");
  cfg.resume = r.str("run.resume");
  cfg.runnable = r.flag("run.runnable");
  cfg.gradcheck_tolerance = r.num("gradcheck.tolerance");
  return cfg;
}

/// Every key with its resolved value, in the canonical key order.
inline RawConfig resolved_config(const RunConfig& cfg) {
  using detail::format_double;
  const auto sz = [](std::size_t v) { return std::to_string(v); };
  const auto bl = [](bool v) { return std::string(v ? "true" : "false"); };
  const auto& vit = cfg.model.vit;
  const auto& dec = cfg.model.decoder;
  const auto& obj = cfg.model.objective;
  const auto& o = cfg.pretrain.optim;
  const auto& f = cfg.finetune;
  const auto& p = cfg.probe;
  RawConfig out{
      {"model.preset", vit.name},
      {"model.depth", sz(vit.depth)},
      {"model.hidden", sz(vit.hidden)},
      {"model.mlp", sz(vit.mlp)},
      {"model.heads", sz(vit.heads)},
      {"model.segments", sz(vit.segments)},
      {"model.patch", sz(vit.patch)},
      {"model.image_size", sz(vit.image_h)},
      {"model.channels", sz(vit.channels)},
      {"model.pos_embed", vit.pos_embed == PosEmbedKind::SinCos ? "sincos" : "learned"},
      {"decoder.blocks", sz(dec.blocks)},
      {"decoder.hidden", sz(dec.hidden)},
      {"decoder.heads", sz(dec.heads)},
      {"decoder.mlp_ratio", sz(dec.mlp_ratio)},
      {"decoder.did", bl(dec.did)},
      {"decoder.shared_mask_token", bl(dec.shared_mask_token)},
      {"objective.mode", to_string(obj.mode)},
      {"objective.lambda", obj.lambda ? detail::join(*obj.lambda, format_double) : ""},
      {"objective.dagger", bl(obj.dagger_omega.has_value())},
      {"objective.omega", format_double(obj.dagger_omega.value_or(1.0))},
      {"objective.norm_pix", bl(obj.norm_pix)},
      {"objective.sigma", format_double(obj.sigma)},
      {"objective.infonce", bl(obj.infonce)},
      {"objective.infonce_weight", format_double(obj.infonce_weight)},
      {"objective.tau", format_double(obj.tau)},
      {"objective.momentum", format_double(obj.momentum)},
      {"objective.infonce_blocks", sz(obj.infonce_blocks)},
      {"objective.perceptual", bl(obj.perceptual)},
      {"objective.perceptual_weight", format_double(obj.perceptual_weight)},
      {"objective.layers", detail::join(obj.perceptual_layers, sz)},
      {"objective.extractor_widths", detail::join(obj.extractor_widths, sz)},
      {"objective.extractor_seed", std::to_string(obj.extractor_seed)},
      {"objective.extractor_weights", obj.extractor_weights},
      {"mask.ratio", format_double(cfg.model.mask_ratio)},
      {"optim.base_lr", format_double(o.base_lr)},
      {"optim.weight_decay", format_double(o.weight_decay)},
      {"optim.beta1", format_double(o.beta1)},
      {"optim.beta2", format_double(o.beta2)},
      {"optim.eps", format_double(o.eps)},
      {"optim.batch_size", sz(o.batch_size)},
      {"optim.warmup_epochs", format_double(o.warmup_epochs)},
      {"optim.epochs", format_double(o.total_epochs)},
      {"optim.steps", sz(o.fixed_steps)},
      {"optim.schedule", detail::schedule_name(o.schedule)},
      {"optim.clip", format_double(o.clip)},
      {"data.source", cfg.data.source},
      {"data.path", cfg.data.path},
      {"data.count", sz(cfg.data.count)},
      {"data.test_count", sz(cfg.data.test_count)},
      {"data.augment", bl(cfg.pretrain.augment)},
      {"data.min_scale", format_double(cfg.pretrain.min_scale)},
      {"finetune.base_lr", format_double(f.optim.base_lr)},
      {"finetune.weight_decay", format_double(f.optim.weight_decay)},
      {"finetune.beta1", format_double(f.optim.beta1)},
      {"finetune.beta2", format_double(f.optim.beta2)},
      {"finetune.batch_size", sz(f.optim.batch_size)},
      {"finetune.warmup_epochs", format_double(f.optim.warmup_epochs)},
      {"finetune.epochs", format_double(f.optim.total_epochs)},
      {"finetune.schedule", detail::schedule_name(f.optim.schedule)},
      {"finetune.layer_decay", format_double(f.layer_decay)},
      {"finetune.label_smoothing", format_double(f.label_smoothing)},
      {"finetune.ema", format_double(f.ema_decay)},
      {"finetune.augment", bl(f.augment)},
      {"probe.use_finetune", bl(cfg.eval.use_finetune)},
      {"probe.epochs", sz(cfg.eval.probe.epochs)},
      {"probe.lr", format_double(cfg.eval.probe.lr)},
      {"probe.weight_decay", format_double(cfg.eval.probe.weight_decay)},
      {"probe.k", detail::join(p.k, sz)},
      {"probe.seeds", detail::join(p.seeds, [](std::uint64_t s) { return std::to_string(s); })},
      {"probe.mode", p.mode},
      {"probe.keep", sz(p.keep)},
      {"probe.steps", sz(p.steps)},
      {"probe.blocks", detail::join(p.blocks, sz)},
      {"probe.compare", bl(p.compare)},
      {"probe.images", sz(p.images)},
      {"probe.pair", sz(p.pair)},
      {"run.seed", std::to_string(cfg.seed)},
      {"run.output_dir", cfg.output_dir},
      {"run.checkpoint", cfg.checkpoint},
      {"run.resume", cfg.resume},
      {"run.runnable", bl(cfg.runnable)},
      {"gradcheck.tolerance", format_double(cfg.gradcheck_tolerance)},
  };
  return out;
}

/// Text form of resolved_config; parsing it back yields the same RunConfig.
inline std::string resolved_config_text(const RunConfig& cfg) {
  const auto values = resolved_config(cfg);
  std::string out = "# resolved configuration\n";
  for (const auto& k : config_keys()) {
    out += std::string(k.key) + " = " + values.at(k.key) + "\n";
  }
  return out;
}

}  // namespace mirl
