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
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mirl/core/random.hpp"
#include "mirl/tokenizer/image.hpp"
#include "mirl/tokenizer/pnm.hpp"

namespace mirl {

/// An in-memory labelled image collection.
struct Dataset {
  ImageBatch images;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.batch; }
};

inline constexpr std::size_t kSyntheticClasses = 10;

namespace detail {

// Texture value in [0, 1] for class `label` at normalized coordinates (u, v).
struct TextureParams {
  int label = 0;
  double freq = 3.0, phase = 0.0, phase2 = 0.0, cx = 0.5, cy = 0.5;
  int spokes = 4;
  double wave[4][4] = {};  // low-frequency noise: fx, fy, phase, amplitude
};

inline double texture_value(const TextureParams& t, double u, double v, Rng& rng) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (t.label) {
    case 0: return 0.5 + 0.5 * std::sin(two_pi * t.freq * v + t.phase);
    case 1: return 0.5 + 0.5 * std::sin(two_pi * t.freq * u + t.phase);
    case 2: return 0.5 + 0.5 * std::sin(two_pi * t.freq * (u + v) * 0.7071 + t.phase);
    case 3: return 0.5 + 0.5 * std::sin(two_pi * t.freq * (u - v) * 0.7071 + t.phase);
    case 4: {
      const double s = std::sin(two_pi * t.freq * u + t.phase) * std::sin(two_pi * t.freq * v + t.phase2);
      return 0.5 + 0.5 * std::tanh(6.0 * s);
    }
    case 5: {
      const double r = std::hypot(u - t.cx, v - t.cy);
      return 0.5 + 0.5 * std::sin(two_pi * t.freq * r + t.phase);
    }
    case 6: {
      const double a = std::atan2(v - t.cy, u - t.cx);
      return 0.5 + 0.5 * std::sin(t.spokes * a + t.phase);
    }
    case 7: {
      const double fu = t.freq * u + t.phase / two_pi, fv = t.freq * v + t.phase2 / two_pi;
      const double du = fu - std::floor(fu) - 0.5, dv = fv - std::floor(fv) - 0.5;
      return std::exp(-(du * du + dv * dv) / 0.03);
    }
    case 8: {
      double s = 0.0;
      for (const auto& w : t.wave) s += w[3] * std::sin(two_pi * (w[0] * u + w[1] * v) + w[2]);
      return 0.5 + 0.5 * std::tanh(s);
    }
    default: return rng.uniform();
  }
}

}  // namespace detail

/// Seeded procedural textures in ten classes (oriented stripes, checkers,
/// rings, spokes, dots, smooth noise, white noise) with random colours,
/// frequencies and phases plus mild pixel noise.
inline Dataset make_synthetic_dataset(std::size_t count, std::size_t size, std::size_t channels,
                                      std::uint64_t seed) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = kSyntheticClasses;
  ds.images = ImageBatch(count, channels, size, size);
  ds.images.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    detail::TextureParams t;
    t.label = static_cast<int>(i % kSyntheticClasses);
    t.freq = rng.uniform(2.0, 5.0);
    t.phase = rng.uniform(0.0, two_pi);
    t.phase2 = rng.uniform(0.0, two_pi);
    t.cx = rng.uniform(0.25, 0.75);
    t.cy = rng.uniform(0.25, 0.75);
    t.spokes = 3 + static_cast<int>(rng.below(4));
    for (auto& w : t.wave) {
      w[0] = rng.uniform(-1.5, 1.5);
      w[1] = rng.uniform(-1.5, 1.5);
      w[2] = rng.uniform(0.0, two_pi);
      w[3] = rng.uniform(0.3, 1.0);
    }
    std::vector<double> lo(channels), hi(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      lo[c] = rng.uniform(0.0, 0.5);
      hi[c] = rng.uniform(0.5, 1.0);
    }
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double s = detail::texture_value(t, (x + 0.5) / size, (y + 0.5) / size, rng);
        for (std::size_t c = 0; c < channels; ++c) {
          const double noise = 0.04 * (rng.uniform() - 0.5);
          ds.images.at(i, c, y, x) = quantize_pixel(lo[c] + (hi[c] - lo[c]) * s + noise);
        }
      }
    ds.images.labels[i] = t.label;
  }
  return ds;
}

/// Bilinear sample of channel `c` of image `b` at continuous pixel
/// coordinates, clamped to the border.
inline double bilinear(const ImageBatch& img, std::size_t b, std::size_t c, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(b, c, y0, x0) + fx * img.at(b, c, y0, x1)) +
         fy * ((1 - fx) * img.at(b, c, y1, x0) + fx * img.at(b, c, y1, x1));
}

/// Crops the box (top, left, h, w) of image `b` and resizes it to
/// out_h x out_w, optionally mirrored. Writes into image `dst_b` of `dst`.
inline void crop_resize(const ImageBatch& src, std::size_t b, double top, double left, double h,
                        double w, bool flip, ImageBatch& dst, std::size_t dst_b) {
  for (std::size_t y = 0; y < dst.height; ++y)
    for (std::size_t x = 0; x < dst.width; ++x) {
      const std::size_t xs = flip ? dst.width - 1 - x : x;
      const double sy = top + (y + 0.5) * h / dst.height - 0.5;
      const double sx = left + (xs + 0.5) * w / dst.width - 0.5;
      for (std::size_t c = 0; c < dst.channels; ++c)
        dst.at(dst_b, c, y, x) = quantize_pixel(bilinear(src, b, c, sy, sx));
    }
}

/// Loads 8-bit PPM/PGM files. Each subdirectory of `dir` is one class
/// (sorted by name); files placed directly in `dir` get label 0. Images are
/// resized to size x size.
inline Dataset load_image_directory(const std::string& dir, std::size_t size,
                                    std::size_t channels) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("data directory not found: " + dir);
  std::vector<std::pair<fs::path, int>> files;
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  auto is_image = [](const fs::path& p) {
    auto ext = p.extension().string();
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
  };
  auto collect = [&](const fs::path& d, int label) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_regular_file() && is_image(e.path())) found.push_back(e.path());
    std::sort(found.begin(), found.end());
    for (auto& p : found) files.emplace_back(p, label);
  };
  collect(dir, 0);
  for (std::size_t k = 0; k < classes.size(); ++k) collect(classes[k], static_cast<int>(k));
  if (files.empty()) throw Error("no .ppm/.pgm images under " + dir);

  Dataset ds;
  ds.num_classes = std::max<std::size_t>(1, classes.size());
  ds.images = ImageBatch(files.size(), channels, size, size);
  ds.images.labels.resize(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto img = read_pnm(files[i].first.string());
    ImageBatch resized(1, img.channels, size, size);
    crop_resize(img, 0, 0, 0, img.height, img.width, false, resized, 0);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          ds.images.at(i, c, y, x) = resized.at(0, std::min(c, img.channels - 1), y, x);
    ds.images.labels[i] = files[i].second;
  }
  return ds;
}

/// Random resized crop (area fraction in [min_scale, 1], aspect ratio in
/// [3/4, 4/3], log-uniform) followed by a horizontal flip with
/// probability 1/2.
inline void random_resized_crop_flip(const ImageBatch& src, std::size_t b, Rng& rng,
                                     double min_scale, ImageBatch& dst, std::size_t dst_b) {
  const double area = static_cast<double>(src.height * src.width);
  double h = src.height, w = src.width, top = 0, left = 0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(min_scale, 1.0);
    const double ratio = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    const double cw = std::sqrt(target * ratio), ch = std::sqrt(target / ratio);
    if (cw <= src.width && ch <= src.height) {
      w = cw;
      h = ch;
      top = rng.uniform(0.0, src.height - h);
      left = rng.uniform(0.0, src.width - w);
      break;
    }
  }
  const bool flip = rng.uniform() < 0.5;
  crop_resize(src, b, top, left, h, w, flip, dst, dst_b);
}

/// Gathers `indices` from the dataset, applying augmentation when `rng` is
/// non-null.
inline ImageBatch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                             Rng* augment_rng, double min_scale = 0.2) {
  const auto& src = ds.images;
  ImageBatch out(indices.size(), src.channels, src.height, src.width);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t j = indices[i];
    if (augment_rng) {
      random_resized_crop_flip(src, j, *augment_rng, min_scale, out, i);
    } else {
      std::copy_n(src.values.begin() + j * src.image_size(), src.image_size(),
                  out.values.begin() + i * src.image_size());
    }
    out.labels[i] = src.labels.empty() ? 0 : src.labels[j];
  }
  return out;
}

}  // namespace mirl
