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
#include <string>
#include <vector>

#include "mirl/core/ops.hpp"
#include "mirl/core/parameter.hpp"
#include "mirl/tokenizer/mask.hpp"

namespace mirl {

/// Visible-token embeddings of a batch: tokens[B, |V|+1, D], class token at
/// slot 0 followed by the visible patches in `plans` storage order.
template <class T>
struct TokenSequence {
  Tensor<T> tokens;
  MaskBatchPtr plans;
  int depth_tag = 0;  // index of the producing segment; 0 for the embedding

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t length() const { return tokens.dim(1); }
  std::size_t width() const { return tokens.dim(2); }
};

enum class PosEmbedKind { Learned, SinCos };

/// Fixed 2-D sin-cos table [gh*gw + 1, dim]; row 0 (class slot) is zero.
template <class T>
std::vector<T> sincos_table(std::size_t gh, std::size_t gw, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("sin-cos position embedding needs width divisible by 4");
  std::vector<T> table((gh * gw + 1) * dim, T(0));
  const std::size_t quarter = dim / 4;
  for (std::size_t y = 0; y < gh; ++y)
    for (std::size_t x = 0; x < gw; ++x) {
      T* row = table.data() + (1 + y * gw + x) * dim;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        row[k] = static_cast<T>(std::sin(x * omega));
        row[quarter + k] = static_cast<T>(std::cos(x * omega));
        row[2 * quarter + k] = static_cast<T>(std::sin(y * omega));
        row[3 * quarter + k] = static_cast<T>(std::cos(y * omega));
      }
    }
  return table;
}

/// Registers an [N+1, dim] position table under `name`.
template <class T>
Tensor<T> make_pos_embed(ParameterStore<T>& store, const std::string& name, std::size_t gh,
                         std::size_t gw, std::size_t dim, PosEmbedKind kind, Rng& rng) {
  if (kind == PosEmbedKind::Learned) {
    return store.add(name, Shape{gh * gw + 1, dim}, Init::TruncNormal, rng);
  }
  return store.insert(name, Tensor<T>(Shape{gh * gw + 1, dim}, sincos_table<T>(gh, gw, dim)),
                      Init::Frozen);
}

/// Linear patch projection with class token and position embeddings.
template <class T>
struct PatchEmbed {
  Tensor<T> weight;  // [P*P*C, D]
  Tensor<T> bias;    // [D]
  Tensor<T> cls;     // [1, D]
  Tensor<T> pos;     // [N+1, D]

  static PatchEmbed create(ParameterStore<T>& store, const std::string& prefix,
                           std::size_t patch_dim, std::size_t gh, std::size_t gw,
                           std::size_t width, PosEmbedKind pos_kind, Rng& rng) {
    PatchEmbed e;
    e.weight = store.add(prefix + "patch_embed.weight", Shape{patch_dim, width},
                         Init::TruncNormal, rng);
    e.bias = store.add(prefix + "patch_embed.bias", Shape{width}, Init::Zeros, rng);
    e.cls = store.add(prefix + "cls_token", Shape{1, width}, Init::TruncNormal, rng);
    e.pos = make_pos_embed(store, prefix + "pos_embed", gh, gw, width, pos_kind, rng);
    return e;
  }

  /// Projects the visible patches of `patches` [B, N, P*P*C], adds their
  /// position embeddings, and prepends the class token.
  TokenSequence<T> embed_visible(const Tensor<T>& patches, const MaskBatchPtr& plans) const {
    const auto& mb = *plans;
    check_uniform_visible(mb);
    const std::size_t b_count = patches.dim(0), n = patches.dim(1);
    if (mb.size() != b_count || mb.front().num_patches != n) {
      throw DimensionError("embed_visible: mask plans do not match patch batch " +
                           shape_str(patches.shape()));
    }
    const std::size_t nv = mb.front().visible.size();
    const std::size_t width = weight.dim(1);
    std::vector<std::size_t> patch_rows, pos_rows;
    patch_rows.reserve(b_count * nv);
    pos_rows.reserve(b_count * nv);
    for (std::size_t b = 0; b < b_count; ++b)
      for (auto v : mb[b].visible) {
        patch_rows.push_back(b * n + v);
        pos_rows.push_back(v + 1);
      }
    auto flat = reshape(patches, Shape{b_count * n, patches.dim(2)});
    auto projected = linear(gather_rows(flat, std::move(patch_rows)), weight, bias);
    auto tokens = add(projected, gather_rows(pos, std::move(pos_rows)));
    auto cls_row = add(cls, gather_rows(pos, {0}));
    auto pool = concat<T>({tokens, cls_row}, 0);
    std::vector<std::size_t> order;
    order.reserve(b_count * (nv + 1));
    for (std::size_t b = 0; b < b_count; ++b) {
      order.push_back(b_count * nv);
      for (std::size_t s = 0; s < nv; ++s) order.push_back(b * nv + s);
    }
    TokenSequence<T> seq;
    seq.tokens = reshape(gather_rows(pool, std::move(order)), Shape{b_count, nv + 1, width});
    seq.plans = plans;
    seq.depth_tag = 0;
    return seq;
  }
};

}  // namespace mirl
