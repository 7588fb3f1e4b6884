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

#include <vector>

#include "mirl/core/ops.hpp"

namespace mirl {

/// Unfolds k x k neighbourhoods of a channel-last image batch x[B, H, W, C]
/// (stride 1, zero padding k/2) into rows [B*H*W, k*k*C], ordered (dy, dx, c).
template <class T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 4 || k % 2 == 0) {
    throw DimensionError("im2col: expected [B,H,W,C] input and odd kernel, got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const long pad = static_cast<long>(k / 2);
  const std::size_t cols = k * k * c;
  std::vector<T> out(b * h * w * cols, T(0));
  const T* xv = x.data().data();
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const std::size_t row = (bi * h + y) * w + xx;
          for (std::size_t dy = 0; dy < k; ++dy) {
            const long sy = static_cast<long>(y + dy) - pad;
            if (sy < 0 || sy >= static_cast<long>(h)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const long sx = static_cast<long>(xx + dx) - pad;
              if (sx < 0 || sx >= static_cast<long>(w)) continue;
              const std::size_t src = ((bi * h + sy) * w + sx) * c;
              const std::size_t dst = row * cols + (dy * k + dx) * c;
              fn(src, dst);
            }
          }
        }
  };
  for_each_tap([&](std::size_t src, std::size_t dst) {
    for (std::size_t ch = 0; ch < c; ++ch) out[dst + ch] = xv[src + ch];
  });
  auto* xn = x.node().get();
  return make_result<T>(Shape{b * h * w, cols}, std::move(out), {&x},
                        [xn, for_each_tap, c](const std::vector<T>& g) {
                          T* gx = xn->grad_data();
                          for_each_tap([&](std::size_t src, std::size_t dst) {
                            for (std::size_t ch = 0; ch < c; ++ch) gx[src + ch] += g[dst + ch];
                          });
                        });
}

/// 3x3-style same-padding convolution on a channel-last batch.
/// weight: [k*k*Cin, Cout], bias: [Cout]. Returns [B, H, W, Cout].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t k) {
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto y = linear(im2col(x, k), weight, bias);
  return reshape(y, Shape{b, h, w, weight.dim(1)});
}

}  // namespace mirl
