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
#include <vector>

#include "mirl/core/kernels.hpp"
#include "mirl/core/tensor.hpp"

namespace mirl {

namespace detail {

template <class T>
void copy_head(const T* src, T* dst, std::size_t rows, std::size_t width, std::size_t offset,
               std::size_t dh) {
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(src + r * width + offset, dh, dst + r * dh);
}

template <class T>
void add_head(const T* src, T* dst, std::size_t rows, std::size_t width, std::size_t offset,
              std::size_t dh) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dh; ++j) dst[r * width + offset + j] += src[r * dh + j];
}

}  // namespace detail

/// Multi-head scaled dot-product attention without projections.
///
/// q: [B, Tq, D], k and v: [B, Tk, D]. Heads split D evenly. When `weights`
/// is non-null it receives the attention probabilities laid out as
/// [B, heads, Tq, Tk].
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::vector<T>* weights = nullptr) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || k.shape() != v.shape() ||
      q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw DimensionError("attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t b = q.dim(0), tq = q.dim(1), tk = k.dim(1), d = q.dim(2);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (tk == 0) throw DimensionError("attention: empty key sequence");
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  std::vector<T> out(b * tq * d, T(0));
  std::vector<T> probs(b * heads * tq * tk);
  std::vector<T> qh(tq * dh), kh(tk * dh), vh(tk * dh), oh(tq * dh);
  for (std::size_t bi = 0; bi < b; ++bi) {
    const T* qb = q.data().data() + bi * tq * d;
    const T* kb = k.data().data() + bi * tk * d;
    const T* vb = v.data().data() + bi * tk * d;
    for (std::size_t h = 0; h < heads; ++h) {
      detail::copy_head(qb, qh.data(), tq, d, h * dh, dh);
      detail::copy_head(kb, kh.data(), tk, d, h * dh, dh);
      detail::copy_head(vb, vh.data(), tk, d, h * dh, dh);
      T* p = probs.data() + (bi * heads + h) * tq * tk;
      kernels::gemm_nt(qh.data(), kh.data(), p, tq, dh, tk, false);
      for (std::size_t i = 0; i < tq; ++i) {
        T* row = p + i * tk;
        T mx = row[0] * scale;
        for (std::size_t j = 0; j < tk; ++j) {
          row[j] *= scale;
          mx = std::max(mx, row[j]);
        }
        T z = T(0);
        for (std::size_t j = 0; j < tk; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        for (std::size_t j = 0; j < tk; ++j) row[j] /= z;
      }
      kernels::gemm_nn(p, vh.data(), oh.data(), tq, tk, dh, false);
      detail::add_head(oh.data(), out.data() + bi * tq * d, tq, d, h * dh, dh);
    }
  }
  if (weights) *weights = probs;

  auto* qn = q.node().get();
  auto* kn = k.node().get();
  auto* vn = v.node().get();
  return make_result<T>(
      q.shape(), std::move(out), {&q, &k, &v},
      [qn, kn, vn, b, tq, tk, d, heads, dh, scale, probs = std::move(probs)](
          const std::vector<T>& g) {
        std::vector<T> qh(tq * dh), kh(tk * dh), vh(tk * dh), go(tq * dh);
        std::vector<T> dp(tq * tk), dq(tq * dh), dk(tk * dh), dv(tk * dh);
        for (std::size_t bi = 0; bi < b; ++bi) {
          const T* qb = qn->value.data() + bi * tq * d;
          const T* kb = kn->value.data() + bi * tk * d;
          const T* vb = vn->value.data() + bi * tk * d;
          const T* gb = g.data() + bi * tq * d;
          for (std::size_t h = 0; h < heads; ++h) {
            const T* p = probs.data() + (bi * heads + h) * tq * tk;
            detail::copy_head(gb, go.data(), tq, d, h * dh, dh);
            detail::copy_head(vb, vh.data(), tk, d, h * dh, dh);
            if (vn->requires_grad) {
              kernels::gemm_tn(p, go.data(), dv.data(), tk, tq, dh, false);
              detail::add_head(dv.data(), vn->grad_data() + bi * tk * d, tk, d, h * dh, dh);
            }
            if (!qn->requires_grad && !kn->requires_grad) continue;
            kernels::gemm_nt(go.data(), vh.data(), dp.data(), tq, dh, tk, false);
            for (std::size_t i = 0; i < tq; ++i) {
              T dot = T(0);
              for (std::size_t j = 0; j < tk; ++j) dot += dp[i * tk + j] * p[i * tk + j];
              for (std::size_t j = 0; j < tk; ++j) {
                dp[i * tk + j] = p[i * tk + j] * (dp[i * tk + j] - dot) * scale;
              }
            }
            if (qn->requires_grad) {
              detail::copy_head(kb, kh.data(), tk, d, h * dh, dh);
              kernels::gemm_nn(dp.data(), kh.data(), dq.data(), tq, tk, dh, false);
              detail::add_head(dq.data(), qn->grad_data() + bi * tq * d, tq, d, h * dh, dh);
            }
            if (kn->requires_grad) {
              detail::copy_head(qb, qh.data(), tq, d, h * dh, dh);
              kernels::gemm_tn(dp.data(), qh.data(), dk.data(), tk, tq, dh, false);
              detail::add_head(dk.data(), kn->grad_data() + bi * tk * d, tk, d, h * dh, dh);
            }
          }
        }
      });
}

}  // namespace mirl
