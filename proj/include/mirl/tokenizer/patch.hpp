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

#include "mirl/core/ops.hpp"
#include "mirl/tokenizer/image.hpp"

namespace mirl {

/// Number of non-overlapping P x P patches in an H x W image.
inline std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch) {
  return (height / patch) * (width / patch);
}

inline void check_patch_grid(std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible into " + std::to_string(patch) + "x" +
                         std::to_string(patch) + " patches");
  }
}

/// Splits images into row-major patches. Output [B, N, P*P*C]; each patch
/// vector is ordered (row-in-patch, column-in-patch, channel).
template <class T>
Tensor<T> patchify(const ImageBatch& img, std::size_t patch) {
  img.validate();
  check_patch_grid(img.height, img.width, patch);
  const std::size_t gh = img.height / patch, gw = img.width / patch;
  const std::size_t n = gh * gw, dim = patch * patch * img.channels;
  std::vector<T> out(img.batch * n * dim);
  for (std::size_t b = 0; b < img.batch; ++b)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px) {
        T* dst = out.data() + ((b * n) + py * gw + px) * dim;
        for (std::size_t y = 0; y < patch; ++y)
          for (std::size_t x = 0; x < patch; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
              dst[(y * patch + x) * img.channels + c] =
                  static_cast<T>(img.at(b, c, py * patch + y, px * patch + x));
      }
  return Tensor<T>(Shape{img.batch, n, dim}, std::move(out));
}

/// Exact inverse of patchify.
template <class T>
ImageBatch unpatchify(const Tensor<T>& patches, std::size_t patch, std::size_t height,
                      std::size_t width) {
  check_patch_grid(height, width, patch);
  if (patches.rank() != 3 || patches.dim(1) * patch * patch != height * width ||
      patches.dim(2) % (patch * patch) != 0) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) +
                         " do not tile a " + std::to_string(height) + "x" +
                         std::to_string(width) + " image");
  }
  const std::size_t b_count = patches.dim(0), n = patches.dim(1), dim = patches.dim(2);
  const std::size_t channels = dim / (patch * patch);
  const std::size_t gw = width / patch;
  ImageBatch img(b_count, channels, height, width);
  const T* src = patches.data().data();
  for (std::size_t b = 0; b < b_count; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t py = i / gw, px = i % gw;
      const T* p = src + (b * n + i) * dim;
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t c = 0; c < channels; ++c)
            img.at(b, c, py * patch + y, px * patch + x) =
                static_cast<double>(p[(y * patch + x) * channels + c]);
    }
  return img;
}

/// Differentiable rearrangement of patches [B, N, P*P*C] into a channel-last
/// image batch [B, H, W, C].
template <class T>
Tensor<T> patches_to_nhwc(const Tensor<T>& patches, std::size_t patch, std::size_t height,
                          std::size_t width) {
  check_patch_grid(height, width, patch);
  const std::size_t b_count = patches.dim(0), n = patches.dim(1);
  const std::size_t channels = patches.dim(2) / (patch * patch);
  const std::size_t gw = width / patch;
  auto rows = reshape(patches, Shape{b_count * n * patch * patch, channels});
  std::vector<std::size_t> idx(b_count * height * width);
  for (std::size_t b = 0; b < b_count; ++b)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t i = (y / patch) * gw + x / patch;
        const std::size_t within = (y % patch) * patch + x % patch;
        idx[(b * height + y) * width + x] = (b * n + i) * patch * patch + within;
      }
  return reshape(gather_rows(rows, std::move(idx)), Shape{b_count, height, width, channels});
}

/// Channel-last copy of an image batch as a constant tensor.
template <class T>
Tensor<T> image_to_nhwc(const ImageBatch& img) {
  std::vector<T> out(img.values.size());
  for (std::size_t b = 0; b < img.batch; ++b)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < img.channels; ++c)
          out[((b * img.height + y) * img.width + x) * img.channels + c] =
              static_cast<T>(img.at(b, c, y, x));
  return Tensor<T>(Shape{img.batch, img.height, img.width, img.channels}, std::move(out));
}

}  // namespace mirl
