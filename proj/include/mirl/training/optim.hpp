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

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "mirl/core/parameter.hpp"

namespace mirl {

enum class Schedule { Cosine, Step };

struct OptimSpec {
  double base_lr = 1.5e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  double warmup_epochs = 0.0;
  double total_epochs = 1.0;
  std::size_t steps_per_epoch = 1;
  Schedule schedule = Schedule::Cosine;
  double clip = 0.0;  // global gradient-norm clip; 0 disables
  std::size_t fixed_steps = 0;  // when nonzero, overrides epochs * steps_per_epoch

  /// base_lr scaled by batch_size / 256.
  double peak_lr() const { return base_lr * static_cast<double>(batch_size) / 256.0; }
  std::size_t total_steps() const {
    if (fixed_steps > 0) return fixed_steps;
    return static_cast<std::size_t>(std::llround(total_epochs * static_cast<double>(steps_per_epoch)));
  }
  std::size_t warmup_steps() const {
    return static_cast<std::size_t>(std::llround(warmup_epochs * static_cast<double>(steps_per_epoch)));
  }

  void validate() const {
    if (warmup_epochs < 0.0 || (fixed_steps == 0 && warmup_epochs > total_epochs) ||
        warmup_steps() > total_steps()) {
      throw ConfigError("optim.warmup_epochs must lie in [0, optim.epochs]");
    }
    if (batch_size == 0 || steps_per_epoch == 0) throw ConfigError("optim: empty batch or epoch");
    if (base_lr < 0.0 || weight_decay < 0.0) throw ConfigError("optim: negative lr or decay");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("optim.betas must lie in [0, 1)");
    }
  }
};

/// Linear warmup, then cosine decay to zero or a x0.1 step at 90% and again
/// at 95% of training.
inline double lr_at(const OptimSpec& spec, std::size_t step) {
  const double peak = spec.peak_lr();
  const std::size_t total = spec.total_steps();
  const std::size_t warm = spec.warmup_steps();
  if (step < warm) return peak * static_cast<double>(step) / static_cast<double>(warm);
  if (spec.schedule == Schedule::Step) {
    const std::size_t m1 = (9 * total + 9) / 10;    // ceil(0.90 * total)
    const std::size_t m2 = (19 * total + 19) / 20;  // ceil(0.95 * total)
    if (step >= m2) return peak * 0.01;
    if (step >= m1) return peak * 0.1;
    return peak;
  }
  if (total <= warm) return peak;
  const double t = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(total - warm));
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Biases, norms, tokens and position tables are exempt from weight decay.
inline bool decays(std::string_view name) {
  return !(name.ends_with(".bias") || name.find("norm") != std::string_view::npos ||
           name.find("cls_token") != std::string_view::npos ||
           name.find("pos_embed") != std::string_view::npos ||
           name.find("mask_token") != std::string_view::npos);
}

/// Depth id used by layer-wise decay: 0 for the patch embedding and tokens,
/// i+1 for encoder block i, depth+1 for everything after the encoder.
inline std::size_t layer_id(std::string_view name, std::size_t depth) {
  constexpr std::string_view kBlocks = "encoder.blocks.";
  if (name.starts_with(kBlocks)) {
    auto rest = name.substr(kBlocks.size());
    return static_cast<std::size_t>(std::stoul(std::string(rest.substr(0, rest.find('.'))))) + 1;
  }
  if (name.starts_with("encoder.")) return 0;
  return depth + 1;
}

/// Multiplier decay^(depth + 1 - id) per parameter.
template <class T>
std::map<std::string, double> layer_decay_multipliers(const ParameterStore<T>& store,
                                                      std::size_t depth, double decay) {
  std::map<std::string, double> out;
  for (const auto& p : store) {
    out[p.name] = std::pow(decay, static_cast<double>(depth + 1 - layer_id(p.name, depth)));
  }
  return out;
}

template <class T>
double global_grad_norm(const ParameterStore<T>& store) {
  double s = 0.0;
  for (const auto& p : store) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

/// Decoupled-weight-decay Adam with bias correction.
template <class T>
class AdamW {
 public:
  struct Moments {
    std::vector<T> m, v;
  };

  explicit AdamW(const OptimSpec& spec) : spec_(spec) {}

  const OptimSpec& spec() const { return spec_; }
  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  void set_lr_multipliers(std::map<std::string, double> mult) { mult_ = std::move(mult); }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  /// One update with learning rate `lr`. Parameters without a gradient
  /// are skipped. Returns the pre-clip global gradient norm.
  double step(ParameterStore<T>& store, double lr) {
    ++t_;
    const double norm = global_grad_norm(store);
    const double clip_scale = (spec_.clip > 0.0 && norm > spec_.clip) ? spec_.clip / norm : 1.0;
    const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
    for (auto& p : store) {
      if (p.init == Init::Frozen || !p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
      auto it = mult_.find(p.name);
      const double plr = lr * (it == mult_.end() ? 1.0 : it->second);
      const double wd = decays(p.name) ? spec_.weight_decay : 0.0;
      auto& mo = moments_[p.name];
      const std::size_t n = p.tensor.numel();
      if (mo.m.empty()) {
        mo.m.assign(n, T(0));
        mo.v.assign(n, T(0));
      }
      auto w = p.tensor.mutable_data();
      auto g = p.tensor.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]) * clip_scale;
        const double m = spec_.beta1 * mo.m[i] + (1.0 - spec_.beta1) * gi;
        const double v = spec_.beta2 * mo.v[i] + (1.0 - spec_.beta2) * gi * gi;
        mo.m[i] = static_cast<T>(m);
        mo.v[i] = static_cast<T>(v);
        double wi = static_cast<double>(w[i]) * (1.0 - plr * wd);
        wi -= plr * (m / bc1) / (std::sqrt(v / bc2) + spec_.eps);
        w[i] = static_cast<T>(wi);
      }
    }
    return norm;
  }

 private:
  OptimSpec spec_;
  std::size_t t_ = 0;
  std::map<std::string, double> mult_;
  std::map<std::string, Moments> moments_;
};

}  // namespace mirl
