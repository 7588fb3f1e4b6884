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
#include <string>
#include <vector>

#include "mirl/tokenizer/pnm.hpp"
#include "mirl/training/model.hpp"

namespace mirl {

/// Per-image min/max rescale to [0, 1]. A constant image maps to 0.5.
inline void rescale_per_image(ImageBatch& img) {
  const std::size_t n = img.image_size();
  for (std::size_t b = 0; b < img.batch; ++b) {
    auto first = img.values.begin() + static_cast<std::ptrdiff_t>(b * n);
    auto [lo, hi] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(n));
    const double l = *lo, h = *hi;
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(n); ++it) {
      *it = h > l ? (*it - l) / (h - l) : 0.5;
    }
  }
}

inline void clamp_unit(ImageBatch& img) {
  for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
}

/// Display panels for one decoder pair of a batch.
struct ReconstructionPanels {
  ImageBatch ground_truth;
  ImageBatch masked;          // masked patches painted gray
  ImageBatch reconstruction;  // main + residual
  ImageBatch residual;        // rescaled per image
  ImageBatch main;
};

/// Computes the five panels for pair `pair` (0-based) of a paired model.
/// With normalized pixel targets, predictions are mapped back through each
/// ground-truth patch's mean and standard deviation.
template <class T>
ReconstructionPanels reconstruction_panels(const MirlModel<T>& model, const ImageBatch& images,
                                           const MaskBatchPtr& plans, std::size_t pair) {
  const auto& cfg = model.config();
  const auto& vit = cfg.vit;
  if (cfg.objective.mode != ObjectiveMode::Mirl || vit.segments < 2) {
    throw ConfigError("reconstruction needs objective.mode=mirl with model.segments >= 2");
  }
  if (pair >= vit.segments / 2) {
    throw ConfigError("reconstruction pair " + std::to_string(pair) + " out of range; model has " +
                      std::to_string(vit.segments / 2) + " pairs");
  }
  NoGradGuard guard;
  const auto px = patchify<T>(images, vit.patch);
  const auto pairs = model.decoders().decode_pairs(model.encode(px, plans));
  std::vector<T> main(pairs[pair].main.values()), res(pairs[pair].residual.values());
  const std::size_t k = vit.patch_dim();
  const auto& truth = px.values();
  std::vector<T> masked(truth);
  for (std::size_t b = 0; b < plans->size(); ++b) {
    for (auto i : (*plans)[b].masked) {
      std::fill_n(masked.begin() + static_cast<std::ptrdiff_t>((b * vit.num_patches() + i) * k), k,
                  T(0.5));
    }
  }
  if (cfg.objective.norm_pix) {
    for (std::size_t r = 0; r < truth.size() / k; ++r) {
      const T* p = truth.data() + r * k;
      T mu = T(0), var = T(0);
      for (std::size_t j = 0; j < k; ++j) mu += p[j];
      mu /= static_cast<T>(k);
      for (std::size_t j = 0; j < k; ++j) var += (p[j] - mu) * (p[j] - mu);
      var /= static_cast<T>(k > 1 ? k - 1 : 1);
      const T sd = std::sqrt(var + T(1e-6));
      for (std::size_t j = 0; j < k; ++j) {
        main[r * k + j] = main[r * k + j] * sd + mu;
        res[r * k + j] *= sd;
      }
    }
  }
  std::vector<T> recon(main.size());
  for (std::size_t i = 0; i < recon.size(); ++i) recon[i] = main[i] + res[i];
  const auto shape = px.shape();
  auto image = [&](std::vector<T> v) {
    return unpatchify(Tensor<T>(shape, std::move(v)), vit.patch, vit.image_h, vit.image_w);
  };
  ReconstructionPanels out{images, image(std::move(masked)), image(std::move(recon)),
                           image(std::move(res)), image(std::move(main))};
  clamp_unit(out.reconstruction);
  clamp_unit(out.main);
  rescale_per_image(out.residual);
  return out;
}

inline const std::vector<std::string>& reconstruction_panel_names() {
  static const std::vector<std::string> names{"gt", "masked", "recon", "residual", "main"};
  return names;
}

/// Writes `{prefix}{i}_{panel}.ppm` for every image i; returns the paths.
inline std::vector<std::string> write_reconstruction_panels(const ReconstructionPanels& panels,
                                                           const std::string& out_dir,
                                                           const std::string& prefix = "img") {
  std::filesystem::create_directories(out_dir);
  const ImageBatch* imgs[] = {&panels.ground_truth, &panels.masked, &panels.reconstruction,
                              &panels.residual, &panels.main};
  std::vector<std::string> paths;
  for (std::size_t b = 0; b < panels.ground_truth.batch; ++b) {
    for (std::size_t p = 0; p < 5; ++p) {
      const auto path = (std::filesystem::path(out_dir) /
                         (prefix + std::to_string(b) + "_" + reconstruction_panel_names()[p] +
                          (imgs[p]->channels == 1 ? ".pgm" : ".ppm")))
                            .string();
      write_pnm(path, *imgs[p], b);
      paths.push_back(path);
    }
  }
  return paths;
}

/// Masks `images` with the model's ratio, decodes pair `pair` and writes
/// the five panels per image into `out_dir`.
template <class T>
std::vector<std::string> reconstruction_dump(const MirlModel<T>& model, const ImageBatch& images,
                                             const std::string& out_dir, std::uint64_t mask_seed,
                                             std::size_t pair = 0) {
  Rng rng(mask_seed);
  const auto& vit = model.config().vit;
  auto plans = sample_masks(images.batch, vit.num_patches(), model.config().mask_ratio, rng);
  return write_reconstruction_panels(reconstruction_panels(model, images, plans, pair), out_dir);
}

}  // namespace mirl
