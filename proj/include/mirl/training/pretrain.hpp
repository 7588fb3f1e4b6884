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

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mirl/tokenizer/dataset.hpp"
#include "mirl/training/checkpoint.hpp"
#include "mirl/training/model.hpp"
#include "mirl/training/optim.hpp"

namespace mirl {

/// SplitMix64 finalizer; derives independent seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded generators per role. Per-step streams are derived from the role
/// seed and the step index, so a resumed run replays the same draws.
struct RngRoles {
  std::uint64_t seed = 0;

  enum Role : std::uint64_t { kInit = 1, kData = 2, kMask = 3, kAugment = 4, kProbe = 5 };

  Rng at(Role role, std::uint64_t index = 0) const { return Rng(mix_seed(mix_seed(seed, role), index)); }

  std::map<std::string, std::string> states() const {
    return {{"data", Rng(mix_seed(seed, kData)).state()},
            {"mask", Rng(mix_seed(seed, kMask)).state()},
            {"augment", Rng(mix_seed(seed, kAugment)).state()},
            {"seed", std::to_string(seed)}};
  }
};

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw Error("cannot open metrics file " + path);
  }
  void write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct PretrainOptions {
  OptimSpec optim;
  bool augment = true;
  double min_scale = 0.2;
};

template <class T>
class Pretrainer {
 public:
  /// Hook run after backward and before the update; may add fields.
  using GradHook = std::function<void(std::size_t step, const ParameterStore<T>&, nlohmann::json&)>;

  Pretrainer(MirlModel<T>& model, const Dataset& data, PretrainOptions opt, std::uint64_t seed)
      : model_(model), data_(data), opt_(std::move(opt)), roles_{seed}, adam_(fix_spec_(opt_.optim, data)) {
    opt_.optim = adam_.spec();
  }

  const OptimSpec& spec() const { return opt_.optim; }
  std::size_t step() const { return step_; }
  std::size_t total_steps() const { return opt_.optim.total_steps(); }
  AdamW<T>& optimizer() { return adam_; }
  void set_grad_hook(GradHook hook) { hook_ = std::move(hook); }

  /// Batch indices for `step`: a fresh permutation per epoch.
  std::vector<std::size_t> batch_indices(std::size_t step) const {
    const std::size_t spe = opt_.optim.steps_per_epoch, bs = opt_.optim.batch_size;
    const std::size_t epoch = step / spe, slot = step % spe;
    if (epoch != cached_epoch_) {
      perm_.resize(data_.size());
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      auto rng = roles_.at(RngRoles::kData, epoch);
      rng.shuffle(perm_.begin(), perm_.end());
      cached_epoch_ = epoch;
    }
    return {perm_.begin() + static_cast<std::ptrdiff_t>(slot * bs),
            perm_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * bs)};
  }

  /// One optimization step; returns the metrics record.
  nlohmann::json run_step() {
    auto aug = roles_.at(RngRoles::kAugment, step_);
    auto mask_rng = roles_.at(RngRoles::kMask, step_);
    auto batch = make_batch(data_, batch_indices(step_), opt_.augment ? &aug : nullptr, opt_.min_scale);
    const auto& vit = model_.config().vit;
    auto plans = sample_masks(batch.batch, vit.num_patches(), model_.config().mask_ratio, mask_rng);
    auto report = model_.loss(batch, plans);
    if (!std::isfinite(report.total)) {
      throw NumericError("non-finite pre-training loss at step " + std::to_string(step_));
    }
    const double lr = lr_at(opt_.optim, step_);
    nlohmann::json rec;
    rec["step"] = step_;
    rec["lr"] = lr;
    rec["loss"] = report.total;
    rec["terms"] = report.per_pair;
    for (const auto& [k, v] : report.aux) rec["aux"][k] = v;
    auto& store = model_.store();
    store.zero_grad();
    report.total_tensor.backward();
    if (hook_) hook_(step_, store, rec);
    rec["grad_norm"] = adam_.step(store, lr);
    model_.after_step();
    ++step_;
    return rec;
  }

  /// Runs until `until` (default: end of schedule). Returns per-step losses.
  std::vector<double> run(std::size_t until = 0, MetricsWriter* writer = nullptr) {
    if (until == 0) until = total_steps();
    std::vector<double> losses;
    while (step_ < until) {
      auto rec = run_step();
      losses.push_back(rec["loss"].template get<double>());
      if (writer) writer->write(rec);
    }
    return losses;
  }

  Checkpoint checkpoint(const std::string& config_text) const {
    Checkpoint ck;
    ck.config = config_text;
    ck.step = step_;
    ck.rng = roles_.states();
    append_store(ck, model_.store());
    for (const auto& [name, mo] : adam_.moments()) {
      const Shape shape{mo.m.size()};
      ck.tensors.push_back(TensorRecord::from<T>("optim.m." + name, shape, mo.m));
      ck.tensors.push_back(TensorRecord::from<T>("optim.v." + name, shape, mo.v));
    }
    if (auto* ms = model_.momentum_store()) append_store(ck, *ms, "momentum.");
    return ck;
  }

  void restore(const Checkpoint& ck) {
    restore_store(ck, model_.store());
    if (auto* ms = model_.momentum_store()) restore_store(ck, *ms, "momentum.");
    adam_.moments().clear();
    for (const auto& rec : ck.tensors) {
      const std::string_view name(rec.name);
      if (!name.starts_with("optim.m.")) continue;
      const std::string pname(name.substr(8));
      const auto* v = ck.find("optim.v." + pname);
      if (!v) throw CheckpointError("checkpoint has no tensor optim.v." + pname);
      adam_.moments()[pname] = {rec.template as<T>(), v->template as<T>()};
    }
    step_ = static_cast<std::size_t>(ck.step);
    adam_.set_steps(step_);
  }

 private:
  static OptimSpec fix_spec_(OptimSpec spec, const Dataset& data) {
    if (data.size() < spec.batch_size) {
      throw ConfigError("dataset has " + std::to_string(data.size()) +
                        " images, fewer than optim.batch_size=" + std::to_string(spec.batch_size));
    }
    spec.steps_per_epoch = data.size() / spec.batch_size;
    spec.validate();
    return spec;
  }

  MirlModel<T>& model_;
  const Dataset& data_;
  PretrainOptions opt_;
  RngRoles roles_;
  AdamW<T> adam_;
  GradHook hook_;
  std::size_t step_ = 0;
  mutable std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  mutable std::vector<std::size_t> perm_;
};

}  // namespace mirl
