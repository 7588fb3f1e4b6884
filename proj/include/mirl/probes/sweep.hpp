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

#include <cstdint>
#include <string>
#include <vector>

#include "mirl/encoder/encoder.hpp"
#include "mirl/probes/records.hpp"
#include "mirl/training/pretrain.hpp"

namespace mirl {

/// Re-initializes the last k encoder blocks of `pretrained` for each k and
/// seed, then scores the result. One record per (k, seed).
template <class T>
ProbeResult reinit_sweep(const ParameterStore<T>& pretrained, const ViTConfig& vit,
                         const std::vector<std::size_t>& ks,
                         const std::vector<std::uint64_t>& seeds, const Dataset& train,
                         const Dataset& test, const EvalSpec& spec) {
  for (auto k : ks) {
    if (k > vit.depth) {
      throw ConfigError("probe.k=" + std::to_string(k) + " exceeds model.depth=" +
                        std::to_string(vit.depth));
    }
  }
  ProbeResult result{"reinit", {}, seeds};
  for (auto k : ks) {
    for (auto seed : seeds) {
      const RngRoles roles{seed};
      auto store = encoder_store(vit, pretrained, mix_seed(seed, RngRoles::kProbe));
      auto rng = roles.at(RngRoles::kProbe, k);
      reinit_tail(store, vit.depth, k, rng);
      result.records.push_back({result.probe, static_cast<double>(k), seed,
                                evaluate_encoder(store, vit, train, test, spec, seed)});
    }
  }
  return result;
}

enum class TruncationMode { Mae, Mirl };

inline TruncationMode parse_truncation_mode(const std::string& s) {
  if (s == "mae") return TruncationMode::Mae;
  if (s == "mirl") return TruncationMode::Mirl;
  throw ConfigError("probe.mode '" + s + "' is not one of mae, mirl");
}

/// Configuration of the shallow model pre-trained by truncated_pretrain.
inline ModelConfig truncated_config(const ModelConfig& full, TruncationMode mode,
                                    std::size_t keep) {
  if (keep == 0 || keep > full.vit.depth) {
    throw ConfigError("probe.keep=" + std::to_string(keep) + " must lie in [1, model.depth=" +
                      std::to_string(full.vit.depth) + "]");
  }
  ModelConfig cfg = full;
  cfg.vit.depth = keep;
  if (mode == TruncationMode::Mae) {
    cfg.vit.segments = 1;
    cfg.objective.mode = ObjectiveMode::Mae;
    cfg.objective.lambda.reset();
    cfg.objective.dagger_omega.reset();
  } else {
    cfg.objective.mode = ObjectiveMode::Mirl;
  }
  cfg.validate();
  return cfg;
}

template <class T>
struct TruncatedPretrainResult {
  Checkpoint checkpoint;         // the truncated model after pre-training
  ParameterStore<T> expanded;    // full-depth encoder, random tail
  std::size_t loaded = 0;        // tensors copied from the truncated model
  ProbeResult result;
};

/// Pre-trains the first `keep` blocks alone, expands to full depth with
/// freshly initialized tail blocks and scores the expanded encoder.
template <class T>
TruncatedPretrainResult<T> truncated_pretrain(TruncationMode mode, std::size_t keep,
                                              const ModelConfig& full, const Dataset& data,
                                              const PretrainOptions& opt, const Dataset& train,
                                              const Dataset& test, const EvalSpec& spec,
                                              std::uint64_t seed,
                                              MetricsWriter* writer = nullptr,
                                              const std::string& config_text = {}) {
  const auto cfg = truncated_config(full, mode, keep);
  MirlModel<T> model(cfg, seed);
  Pretrainer<T> trainer(model, data, opt, seed);
  trainer.run(0, writer);
  TruncatedPretrainResult<T> out;
  out.checkpoint = trainer.checkpoint(config_text);
  Rng rng(mix_seed(seed, RngRoles::kProbe));
  Encoder<T> enc(out.expanded, full.vit, rng);
  out.loaded = load_truncated_encoder(out.expanded, model.store());
  out.result.probe = mode == TruncationMode::Mae ? "truncate_mae" : "truncate_mirl";
  out.result.seeds = {seed};
  out.result.records.push_back({out.result.probe, static_cast<double>(keep), seed,
                                evaluate_encoder(out.expanded, full.vit, train, test, spec, seed)});
  return out;
}

}  // namespace mirl
