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

#include <string>
#include <vector>

#include "mirl/encoder/block.hpp"
#include "mirl/encoder/config.hpp"

namespace mirl {

/// Outputs of every encoder segment: per_segment[g-1] holds z_g over the
/// visible tokens; z0 is the embedded input.
template <class T>
struct SegmentedEncoderState {
  TokenSequence<T> z0;
  std::vector<TokenSequence<T>> per_segment;

  std::size_t segments() const { return per_segment.size(); }
  /// z_g for g in 0..G.
  const TokenSequence<T>& z(std::size_t g) const { return g == 0 ? z0 : per_segment.at(g - 1); }
};

inline std::string encoder_block_prefix(std::size_t index) {
  return "encoder.blocks." + std::to_string(index) + ".";
}

/// ViT encoder operating on visible tokens only.
template <class T>
class Encoder {
 public:
  Encoder() = default;

  Encoder(ParameterStore<T>& store, const ViTConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    embed_ = PatchEmbed<T>::create(store, "encoder.", cfg.patch_dim(), cfg.grid_h(),
                                   cfg.grid_w(), cfg.hidden, cfg.pos_embed, rng);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      auto prefix = encoder_block_prefix(i);
      prefix.pop_back();
      blocks_.push_back(
          TransformerBlock<T>::create(store, prefix, cfg.hidden, cfg.mlp, cfg.heads, rng));
    }
  }

  const ViTConfig& config() const { return cfg_; }
  const PatchEmbed<T>& embed() const { return embed_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }

  TokenSequence<T> embed_visible(const Tensor<T>& patches, const MaskBatchPtr& plans) const {
    return embed_.embed_visible(patches, plans);
  }

  /// Runs blocks [first, last) on `x`.
  TokenSequence<T> run_blocks(const TokenSequence<T>& x, std::size_t first,
                              std::size_t last) const {
    TokenSequence<T> h = x;
    for (std::size_t i = first; i < last; ++i) h.tokens = blocks_.at(i)(h.tokens);
    return h;
  }

  /// All blocks in sequence, without segment bookkeeping.
  TokenSequence<T> forward(const TokenSequence<T>& z0) const {
    auto out = run_blocks(z0, 0, blocks_.size());
    out.depth_tag = static_cast<int>(cfg_.segments);
    return out;
  }

  /// Segment g applies blocks (g-1)*L/G .. g*L/G-1 to z_{g-1}.
  SegmentedEncoderState<T> encode_segments(const TokenSequence<T>& z0) const {
    const std::size_t per = cfg_.blocks_per_segment();
    SegmentedEncoderState<T> state;
    state.z0 = z0;
    TokenSequence<T> h = z0;
    for (std::size_t g = 0; g < cfg_.segments; ++g) {
      h = run_blocks(h, g * per, (g + 1) * per);
      h.depth_tag = static_cast<int>(g + 1);
      state.per_segment.push_back(h);
    }
    return state;
  }

 private:
  ViTConfig cfg_;
  PatchEmbed<T> embed_;
  std::vector<TransformerBlock<T>> blocks_;
};

/// Re-draws the parameters of the last `k` encoder blocks from their
/// initialization distribution. Earlier blocks are untouched.
template <class T>
void reinit_tail(ParameterStore<T>& store, std::size_t depth, std::size_t k, Rng& rng) {
  if (k > depth) {
    throw ConfigError("reinit_tail: k=" + std::to_string(k) + " exceeds depth " +
                      std::to_string(depth));
  }
  for (std::size_t i = depth - k; i < depth; ++i) {
    for (auto* p : store.with_prefix(encoder_block_prefix(i))) initialize(p->tensor, p->init, rng);
  }
}

/// Copies encoder weights from a truncated model into a full-depth one.
/// Block i of the source lands in block slot i; slots beyond the source
/// depth keep their (random) values. Returns the number of tensors copied.
template <class T>
std::size_t load_truncated_encoder(ParameterStore<T>& full, const ParameterStore<T>& truncated) {
  return full.copy_from(truncated, "encoder.");
}

}  // namespace mirl
