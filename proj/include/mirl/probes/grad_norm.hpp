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
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "mirl/encoder/encoder.hpp"
#include "mirl/training/pretrain.hpp"

namespace mirl {

struct GradNormRecord {
  std::size_t step = 0;
  std::size_t block = 0;
  std::string group;  // attn_qkv, fc, mlp or layer_norm
  double norm = 0.0;
};

inline const std::vector<std::string>& grad_norm_groups() {
  static const std::vector<std::string> groups{"attn_qkv", "fc", "mlp", "layer_norm"};
  return groups;
}

/// Group of a parameter name relative to its block prefix, or "" if none.
inline std::string grad_norm_group(std::string_view local) {
  if (local.starts_with("attn.qkv.")) return "attn_qkv";
  if (local.starts_with("attn.proj.")) return "fc";
  if (local.starts_with("mlp.")) return "mlp";
  if (local.starts_with("norm")) return "layer_norm";
  return {};
}

/// L2 norm of the current gradients per encoder block and group. Blocks
/// not listed in `blocks` are skipped; an empty list selects all.
template <class T>
std::vector<GradNormRecord> block_grad_norms(const ParameterStore<T>& store, std::size_t depth,
                                             std::size_t step,
                                             const std::vector<std::size_t>& blocks = {}) {
  std::vector<GradNormRecord> out;
  for (std::size_t b = 0; b < depth; ++b) {
    if (!blocks.empty() && std::find(blocks.begin(), blocks.end(), b) == blocks.end()) continue;
    const auto prefix = encoder_block_prefix(b);
    for (const auto& group : grad_norm_groups()) {
      double sq = 0.0;
      for (const auto& p : store) {
        const std::string_view name(p.name);
        if (!name.starts_with(prefix) || grad_norm_group(name.substr(prefix.size())) != group) {
          continue;
        }
        if (!p.tensor.has_grad()) continue;
        for (auto g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
      }
      out.push_back({step, b, group, std::sqrt(sq)});
    }
  }
  return out;
}

/// Runs `steps` pre-training steps and records block gradient norms after
/// each backward pass. Each step's metrics record gains a "grad_norms" map.
template <class T>
std::vector<GradNormRecord> grad_norm_probe(Pretrainer<T>& trainer, std::size_t depth,
                                            std::size_t steps,
                                            const std::vector<std::size_t>& blocks = {},
                                            MetricsWriter* writer = nullptr) {
  std::vector<GradNormRecord> all;
  trainer.set_grad_hook([&](std::size_t step, const ParameterStore<T>& store, nlohmann::json& rec) {
    for (auto& r : block_grad_norms(store, depth, step, blocks)) {
      rec["grad_norms"][std::to_string(r.block)][r.group] = r.norm;
      all.push_back(std::move(r));
    }
  });
  trainer.run(trainer.step() + steps, writer);
  trainer.set_grad_hook(nullptr);
  return all;
}

/// Columns: probe, step, block, group, norm.
inline void write_grad_norm_csv(std::ofstream& out, const std::string& label,
                                const std::vector<GradNormRecord>& records) {
  out.precision(17);
  for (const auto& r : records) {
    out << label << ',' << r.step << ',' << r.block << ',' << r.group << ',' << r.norm << '\n';
  }
}

inline void write_grad_norm_csv(const std::string& path,
                                const std::vector<std::pair<std::string, std::vector<GradNormRecord>>>& runs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "probe,step,block,group,norm\n";
  for (const auto& [label, recs] : runs) write_grad_norm_csv(out, label, recs);
  if (!out) throw Error("failed writing " + path);
}

}  // namespace mirl
