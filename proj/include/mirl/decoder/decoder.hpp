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

#include <memory>
#include <string>
#include <vector>

#include "mirl/encoder/encoder.hpp"

namespace mirl {

struct DecoderConfig {
  std::size_t blocks = 2;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  bool did = true;
  bool shared_mask_token = true;

  void validate() const {
    if (blocks < 1) throw ConfigError("decoder.blocks must be >= 1");
    if (heads == 0 || hidden % heads != 0) {
      throw ConfigError("decoder.hidden=" + std::to_string(hidden) +
                        " must be divisible by decoder.heads=" + std::to_string(heads));
    }
  }
};

/// Predictions of one shortcut-connected pair: `main` comes from the
/// shallow decoder H_g, `residual` from the deep decoder H_{G-g+1}. Both
/// cover all N patch positions, [B, N, P*P*C]. For G = 1 `residual` is
/// undefined.
template <class T>
struct PairOutputs {
  std::size_t g = 1;
  Tensor<T> main;
  Tensor<T> residual;

  Tensor<T> combined() const { return residual.defined() ? add(main, residual) : main; }
};

/// Builds u_g [B, N+1, Dd]: visible slots take the projected encoder tokens
/// at their original patch index, masked slots take `mask_token`, then the
/// position table is added (unless `add_pos` is false).
template <class T>
Tensor<T> fill_mask_tokens(const TokenSequence<T>& z, const LinearParams<T>& embed,
                           const Tensor<T>& mask_token, const Tensor<T>& pos,
                           bool add_pos = true) {
  const auto& plans = *z.plans;
  const std::size_t b_count = z.batch(), t = z.length(), n = plans.front().num_patches;
  const std::size_t dd = embed.weight.dim(1);
  auto projected = reshape(embed(z.tokens), Shape{b_count * t, dd});
  auto pool = concat<T>({projected, reshape(mask_token, Shape{1, dd})}, 0);
  const std::size_t mask_row = b_count * t;
  std::vector<std::size_t> idx(b_count * (n + 1), mask_row);
  for (std::size_t b = 0; b < b_count; ++b) {
    idx[b * (n + 1)] = b * t;
    const auto& vis = plans[b].visible;
    for (std::size_t s = 0; s < vis.size(); ++s) idx[b * (n + 1) + 1 + vis[s]] = b * t + 1 + s;
  }
  auto u = reshape(gather_rows(pool, std::move(idx)), Shape{b_count, n + 1, dd});
  return add_pos ? add(u, pos) : u;
}

/// Cross-attention of decoder queries onto the concatenated outputs of all
/// earlier segments (keys and values share the sequence).
template <class T>
Tensor<T> did_attention(const Tensor<T>& queries, const Tensor<T>& prior,
                        const CrossAttention<T>& cross, std::vector<T>* weights = nullptr) {
  if (prior.rank() != 3 || prior.dim(1) == 0) throw Error("did_attention: empty prior sequence");
  return cross(queries, prior, weights);
}

/// Concatenates [z_{g-1}, ..., z_0] along the token axis.
template <class T>
Tensor<T> prior_sequence(const SegmentedEncoderState<T>& state, std::size_t g) {
  if (g == 0) throw Error("prior_sequence: segment index starts at 1");
  std::vector<Tensor<T>> parts;
  for (std::size_t j = g; j-- > 0;) parts.push_back(state.z(j).tokens);
  return parts.size() == 1 ? parts.front() : concat(parts, 1);
}

/// Decoder H_g attached to encoder segment g.
template <class T>
class SegmentDecoder {
 public:
  SegmentDecoder() = default;

  SegmentDecoder(ParameterStore<T>& store, std::size_t g, const ViTConfig& vit,
                 const DecoderConfig& cfg, Tensor<T> shared_mask_token, Rng& rng)
      : g_(g), did_(cfg.did) {
    const std::string prefix = "decoder." + std::to_string(g) + ".";
    embed_ = LinearParams<T>::create(store, prefix + "embed", vit.hidden, cfg.hidden, rng);
    mask_token_ = cfg.shared_mask_token
                      ? shared_mask_token
                      : store.add(prefix + "mask_token", Shape{1, cfg.hidden}, Init::TruncNormal, rng);
    pos_ = store.add(prefix + "pos_embed", Shape{vit.num_patches() + 1, cfg.hidden},
                     Init::TruncNormal, rng);
    for (std::size_t j = 0; j < cfg.blocks; ++j) {
      blocks_.push_back(TransformerBlock<T>::create(
          store, prefix + "blocks." + std::to_string(j), cfg.hidden, cfg.hidden * cfg.mlp_ratio,
          cfg.heads, rng, cfg.did && j == 0));
    }
    norm_ = LayerNormParams<T>::create(store, prefix + "norm", cfg.hidden, rng);
    head_ = LinearParams<T>::create(store, prefix + "head", cfg.hidden, vit.patch_dim(), rng);
  }

  std::size_t index() const { return g_; }
  const LinearParams<T>& embed() const { return embed_; }
  const Tensor<T>& mask_token() const { return mask_token_; }
  const Tensor<T>& pos_embed() const { return pos_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }

  /// Full decoding of segment g's output into per-patch pixels [B, N, P*P*C].
  Tensor<T> operator()(const SegmentedEncoderState<T>& state) const {
    const auto& z = state.z(g_);
    auto u = fill_mask_tokens(z, embed_, mask_token_, pos_);
    Tensor<T> context;
    if (did_) context = embed_(prior_sequence(state, g_));
    return decode(u, did_ ? &context : nullptr);
  }

  /// Runs the decoder blocks on a prepared u_g; `context` feeds DID.
  Tensor<T> decode(const Tensor<T>& u, const Tensor<T>* context) const {
    Tensor<T> h = u;
    for (std::size_t j = 0; j < blocks_.size(); ++j) h = blocks_[j](h, j == 0 ? context : nullptr);
    auto out = head_(norm_(h));
    const std::size_t b_count = out.dim(0), slots = out.dim(1), k = out.dim(2);
    std::vector<std::size_t> rows;
    rows.reserve(b_count * (slots - 1));
    for (std::size_t b = 0; b < b_count; ++b)
      for (std::size_t i = 1; i < slots; ++i) rows.push_back(b * slots + i);
    auto flat = reshape(out, Shape{b_count * slots, k});
    return reshape(gather_rows(flat, std::move(rows)), Shape{b_count, slots - 1, k});
  }

 private:
  std::size_t g_ = 1;
  bool did_ = true;
  LinearParams<T> embed_;
  Tensor<T> mask_token_;
  Tensor<T> pos_;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNormParams<T> norm_;
  LinearParams<T> head_;
};

/// One decoder per encoder segment, H_1 .. H_G.
template <class T>
class DecoderStack {
 public:
  DecoderStack() = default;

  DecoderStack(ParameterStore<T>& store, const ViTConfig& vit, const DecoderConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    cfg_.validate();
    Tensor<T> shared;
    if (cfg.shared_mask_token) {
      shared = store.add("decoder.mask_token", Shape{1, cfg.hidden}, Init::TruncNormal, rng);
    }
    for (std::size_t g = 1; g <= vit.segments; ++g) {
      decoders_.emplace_back(store, g, vit, cfg, shared, rng);
    }
  }

  const DecoderConfig& config() const { return cfg_; }
  std::size_t size() const { return decoders_.size(); }
  const SegmentDecoder<T>& decoder(std::size_t g) const { return decoders_.at(g - 1); }

  /// Independent reconstructions x_hat from every decoder, index g-1.
  std::vector<Tensor<T>> multi_decoder_outputs(const SegmentedEncoderState<T>& state) const {
    if (state.segments() != decoders_.size()) {
      throw ConfigError("decoder count " + std::to_string(decoders_.size()) +
                        " does not match " + std::to_string(state.segments()) + " segments");
    }
    std::vector<Tensor<T>> out;
    for (const auto& d : decoders_) out.push_back(d(state));
    return out;
  }

  /// Shortcut-paired predictions: pair g joins H_g (main) with H_{G-g+1}
  /// (residual) for g = 1..G/2. A single-segment model yields one
  /// main-only output.
  std::vector<PairOutputs<T>> decode_pairs(const SegmentedEncoderState<T>& state) const {
    auto preds = multi_decoder_outputs(state);
    const std::size_t G = preds.size();
    std::vector<PairOutputs<T>> pairs;
    if (G == 1) {
      pairs.push_back({1, preds[0], Tensor<T>()});
      return pairs;
    }
    if (G % 2 != 0) throw ConfigError("decode_pairs needs an even segment count");
    for (std::size_t g = 1; g <= G / 2; ++g) pairs.push_back({g, preds[g - 1], preds[G - g]});
    return pairs;
  }

 private:
  DecoderConfig cfg_;
  std::vector<SegmentDecoder<T>> decoders_;
};

}  // namespace mirl
