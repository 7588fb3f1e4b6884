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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mirl/core/error.hpp"

namespace mirl {

/// Pixel values are kept on a 2^-16 grid so that sums and differences of
/// images with similarly quantized components are exact in both float and
/// double.
inline constexpr double kPixelQuantum = 1.0 / 65536.0;

inline double quantize_pixel(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return std::round(v / kPixelQuantum) * kPixelQuantum;
}

/// B x C x H x W batch of images with values in [0, 1].
struct ImageBatch {
  std::size_t batch = 0, channels = 0, height = 0, width = 0;
  std::vector<double> values;
  std::vector<int> labels;  // empty, or one per image

  ImageBatch() = default;
  ImageBatch(std::size_t b, std::size_t c, std::size_t h, std::size_t w)
      : batch(b), channels(c), height(h), width(w), values(b * c * h * w, 0.0) {}

  std::size_t image_size() const { return channels * height * width; }

  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return values[((b * channels + c) * height + y) * width + x];
  }
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return values[((b * channels + c) * height + y) * width + x];
  }

  /// Copy of a single image (keeps its label when present).
  ImageBatch slice(std::size_t b) const {
    ImageBatch out(1, channels, height, width);
    std::copy_n(values.begin() + b * image_size(), image_size(), out.values.begin());
    if (!labels.empty()) out.labels = {labels[b]};
    return out;
  }

  void validate() const {
    if (channels == 0) throw DimensionError("image batch needs at least one channel");
    if (values.size() != batch * image_size()) {
      throw DimensionError("image batch storage does not match its dimensions");
    }
    if (!labels.empty() && labels.size() != batch) {
      throw DimensionError("image batch has " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(batch) + " images");
    }
  }
};

}  // namespace mirl
