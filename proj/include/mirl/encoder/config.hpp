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

#include "mirl/core/error.hpp"
#include "mirl/tokenizer/embedding.hpp"
#include "mirl/tokenizer/patch.hpp"

namespace mirl {

/// Encoder geometry plus the segment count G used for residual pairing.
struct ViTConfig {
  std::string name = "tiny-8";
  std::size_t depth = 8;
  std::size_t hidden = 64;
  std::size_t mlp = 256;
  std::size_t heads = 4;
  std::size_t segments = 2;
  std::size_t patch = 4;
  std::size_t image_h = 32, image_w = 32, channels = 3;
  PosEmbedKind pos_embed = PosEmbedKind::Learned;

  std::size_t grid_h() const { return image_h / patch; }
  std::size_t grid_w() const { return image_w / patch; }
  std::size_t num_patches() const { return grid_h() * grid_w(); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t blocks_per_segment() const { return depth / segments; }

  void validate() const {
    if (depth == 0) throw ConfigError("model.depth must be positive");
    if (heads == 0 || hidden % heads != 0) {
      throw ConfigError("model.hidden=" + std::to_string(hidden) +
                        " must be divisible by model.heads=" + std::to_string(heads));
    }
    if (segments == 0) throw ConfigError("model.segments must be positive");
    if (segments != 1 && segments % 2 != 0) {
      throw ConfigError("model.segments=" + std::to_string(segments) +
                        " must be 1 or even: segment g is paired with segment G-g+1 to "
                        "form a main/residual reconstruction");
    }
    if (depth % segments != 0) {
      throw ConfigError("model.segments=" + std::to_string(segments) +
                        " does not divide model.depth=" + std::to_string(depth));
    }
    if (channels == 0) throw ConfigError("model.channels must be positive");
    check_patch_grid(image_h, image_w, patch);
  }
};

/// Named encoder presets. Returns false when `name` is unknown.
inline bool vit_preset(const std::string& name, ViTConfig& cfg) {
  auto paper_scale = [&](std::size_t depth, std::size_t hidden, std::size_t mlp,
                         std::size_t segments) {
    cfg = ViTConfig{};
    cfg.name = name;
    cfg.depth = depth;
    cfg.hidden = hidden;
    cfg.mlp = mlp;
    cfg.heads = 12;
    cfg.segments = segments;
    cfg.patch = 16;
    cfg.image_h = cfg.image_w = 224;
    cfg.channels = 3;
  };
  if (name == "ViT-S-54") {
    paper_scale(54, 384, 1536, 6);
  } else if (name == "ViT-B-24") {
    paper_scale(24, 768, 3072, 4);
  } else if (name == "ViT-B-48") {
    paper_scale(48, 768, 3072, 6);
  } else if (name == "ViT-B") {
    paper_scale(12, 768, 3072, 2);
  } else if (name == "ViT-S") {
    paper_scale(12, 384, 1536, 2);
    cfg.heads = 6;
  } else if (name == "tiny-8") {
    cfg = ViTConfig{};
  } else {
    return false;
  }
  return true;
}

inline const char* const kVitPresetNames[] = {"tiny-8", "ViT-S", "ViT-B", "ViT-S-54", "ViT-B-24",
                                              "ViT-B-48"};

/// Config for pre-training only the first `keep` blocks.
inline ViTConfig truncate(const ViTConfig& cfg, std::size_t keep) {
  if (keep < 1 || keep > cfg.depth) {
    throw ConfigError("truncate: keep=" + std::to_string(keep) + " outside [1, " +
                      std::to_string(cfg.depth) + "]");
  }
  ViTConfig out = cfg;
  out.depth = keep;
  return out;
}

}  // namespace mirl
