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

#include "mirl/core/attention.hpp"
#include "mirl/core/ops.hpp"
#include "mirl/core/parameter.hpp"
#include "mirl/tokenizer/embedding.hpp"

namespace mirl {

template <class T>
struct LayerNormParams {
  Tensor<T> gain, bias;

  static LayerNormParams create(ParameterStore<T>& store, const std::string& prefix,
                                std::size_t width, Rng& rng) {
    return {store.add(prefix + ".weight", Shape{width}, Init::Ones, rng),
            store.add(prefix + ".bias", Shape{width}, Init::Zeros, rng)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

template <class T>
struct LinearParams {
  Tensor<T> weight, bias;

  static LinearParams create(ParameterStore<T>& store, const std::string& prefix,
                             std::size_t in, std::size_t out, Rng& rng) {
    return {store.add(prefix + ".weight", Shape{in, out}, Init::TruncNormal, rng),
            store.add(prefix + ".bias", Shape{out}, Init::Zeros, rng)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

/// Multi-head self-attention with a fused qkv projection.
template <class T>
struct SelfAttention {
  LinearParams<T> qkv, proj;
  std::size_t heads = 1;

  static SelfAttention create(ParameterStore<T>& store, const std::string& prefix,
                              std::size_t width, std::size_t heads, Rng& rng) {
    return {LinearParams<T>::create(store, prefix + ".qkv", width, 3 * width, rng),
            LinearParams<T>::create(store, prefix + ".proj", width, width, rng), heads};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    const std::size_t d = x.dim(2);
    auto fused = qkv(x);
    auto q = slice_last(fused, 0, d);
    auto k = slice_last(fused, d, d);
    auto v = slice_last(fused, 2 * d, d);
    return proj(attention(q, k, v, heads));
  }
};

/// Multi-head attention whose keys/values come from a separate sequence.
template <class T>
struct CrossAttention {
  LinearParams<T> q, kv, proj;
  std::size_t heads = 1;

  static CrossAttention create(ParameterStore<T>& store, const std::string& prefix,
                               std::size_t width, std::size_t heads, Rng& rng) {
    return {LinearParams<T>::create(store, prefix + ".q", width, width, rng),
            LinearParams<T>::create(store, prefix + ".kv", width, 2 * width, rng),
            LinearParams<T>::create(store, prefix + ".proj", width, width, rng), heads};
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& context,
                       std::vector<T>* weights = nullptr) const {
    const std::size_t d = x.dim(2);
    auto fused = kv(context);
    auto out = attention(q(x), slice_last(fused, 0, d), slice_last(fused, d, d), heads, weights);
    return proj(out);
  }
};

template <class T>
struct Mlp {
  LinearParams<T> fc1, fc2;

  static Mlp create(ParameterStore<T>& store, const std::string& prefix, std::size_t width,
                    std::size_t hidden, Rng& rng) {
    return {LinearParams<T>::create(store, prefix + ".fc1", width, hidden, rng),
            LinearParams<T>::create(store, prefix + ".fc2", hidden, width, rng)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(gelu(fc1(x))); }
};

/// Pre-norm Transformer block:
///   x += Attn(LN(x)); [x += Cross(LN(x), context)]; x += MLP(LN(x)).
/// The cross-attention sublayer exists only when created with `with_cross`.
template <class T>
struct TransformerBlock {
  LayerNormParams<T> norm1;
  SelfAttention<T> attn;
  bool has_cross = false;
  LayerNormParams<T> norm_cross;
  CrossAttention<T> cross;
  LayerNormParams<T> norm2;
  Mlp<T> mlp;

  static TransformerBlock create(ParameterStore<T>& store, const std::string& prefix,
                                 std::size_t width, std::size_t mlp_width, std::size_t heads,
                                 Rng& rng, bool with_cross = false) {
    TransformerBlock b;
    b.norm1 = LayerNormParams<T>::create(store, prefix + ".norm1", width, rng);
    b.attn = SelfAttention<T>::create(store, prefix + ".attn", width, heads, rng);
    b.has_cross = with_cross;
    if (with_cross) {
      b.norm_cross = LayerNormParams<T>::create(store, prefix + ".did_norm", width, rng);
      b.cross = CrossAttention<T>::create(store, prefix + ".did", width, heads, rng);
    }
    b.norm2 = LayerNormParams<T>::create(store, prefix + ".norm2", width, rng);
    b.mlp = Mlp<T>::create(store, prefix + ".mlp", width, mlp_width, rng);
    return b;
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>* context = nullptr) const {
    auto h = add(x, attn(norm1(x)));
    if (has_cross && context) h = add(h, cross(norm_cross(h), *context));
    return add(h, mlp(norm2(h)));
  }
};

/// Applies one block to a token sequence, keeping its mask bookkeeping.
template <class T>
TokenSequence<T> transformer_block(const TokenSequence<T>& x, const TransformerBlock<T>& block) {
  return {block(x.tokens), x.plans, x.depth_tag};
}

}  // namespace mirl
