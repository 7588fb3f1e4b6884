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

#include "mirl/core/error.hpp"
#include "mirl/tokenizer/image.hpp"

namespace mirl {

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("objective.sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    s += k[i + radius];
  }
  for (auto& v : k) v /= s;
  return k;
}

namespace detail {
// Symmetric (half-sample) reflection into [0, n).
inline std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - 1 - i);
}
}  // namespace detail

/// Separable Gaussian low-pass with reflected borders.
inline ImageBatch gaussian_blur(const ImageBatch& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  ImageBatch tmp = img, out = img;
  for (std::size_t b = 0; b < img.batch; ++b)
    for (std::size_t c = 0; c < img.channels; ++c) {
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          double s = 0.0;
          for (long t = -r; t <= r; ++t)
            s += k[t + r] * img.at(b, c, y, detail::reflect_index(static_cast<long>(x) + t, img.width));
          tmp.at(b, c, y, x) = s;
        }
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
          double s = 0.0;
          for (long t = -r; t <= r; ++t)
            s += k[t + r] * tmp.at(b, c, detail::reflect_index(static_cast<long>(y) + t, img.height), x);
          out.at(b, c, y, x) = s;
        }
    }
  return out;
}

/// Low-pass / high-pass split of an image batch.
struct CoarseFineTargets {
  ImageBatch coarse;  // Gaussian blur, on the pixel grid
  ImageBatch fine;    // original - coarse
  double sigma = 0.0;
};

enum class TargetOrder { CoarseToFine, FineToCoarse };

/// coarse = blur(x) rounded to the 2^-16 pixel grid; fine = x - coarse.
/// With x on the same grid the subtraction is exact, so coarse + fine
/// reproduces x bit for bit.
inline CoarseFineTargets coarse_fine_targets(const ImageBatch& x, double sigma) {
  CoarseFineTargets out;
  out.sigma = sigma;
  out.coarse = gaussian_blur(x, sigma);
  for (auto& v : out.coarse.values) v = std::round(v / kPixelQuantum) * kPixelQuantum;
  out.fine = x;
  for (std::size_t i = 0; i < x.values.size(); ++i) out.fine.values[i] = x.values[i] - out.coarse.values[i];
  out.coarse.labels = x.labels;
  out.fine.labels = x.labels;
  return out;
}

/// Target image for decoder g (1-based) of G: the shallow half gets the
/// coarse component under CoarseToFine, the deep half the fine one; the
/// assignment flips under FineToCoarse.
inline const ImageBatch& segment_target(const CoarseFineTargets& t, std::size_t g, std::size_t G,
                                        TargetOrder order) {
  const bool shallow = g <= G / 2;
  const bool coarse = (order == TargetOrder::CoarseToFine) == shallow;
  return coarse ? t.coarse : t.fine;
}

}  // namespace mirl
