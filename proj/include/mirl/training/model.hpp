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

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mirl/objectives/coarse_fine.hpp"
#include "mirl/objectives/contrastive.hpp"
#include "mirl/objectives/perceptual.hpp"
#include "mirl/objectives/reconstruction.hpp"
#include "mirl/training/checkpoint.hpp"

namespace mirl {

enum class ObjectiveMode { Mirl, Mae, MultiDecoder, CoarseToFine, FineToCoarse };

inline std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::Mirl: return "mirl";
    case ObjectiveMode::Mae: return "mae";
    case ObjectiveMode::MultiDecoder: return "multi_decoder";
    case ObjectiveMode::CoarseToFine: return "coarse_to_fine";
    case ObjectiveMode::FineToCoarse: return "fine_to_coarse";
  }
  return "?";
}

inline ObjectiveMode parse_objective_mode(const std::string& s) {
  for (auto m : {ObjectiveMode::Mirl, ObjectiveMode::Mae, ObjectiveMode::MultiDecoder,
                 ObjectiveMode::CoarseToFine, ObjectiveMode::FineToCoarse}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("objective.mode '" + s +
                    "' is not one of mirl, mae, multi_decoder, coarse_to_fine, fine_to_coarse");
}

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::Mirl;
  std::optional<std::vector<double>> lambda;
  std::optional<double> dagger_omega;
  bool norm_pix = false;
  double sigma = 2.0;

  bool infonce = false;
  double infonce_weight = 1.0;
  double tau = 0.2;
  double momentum = 0.996;
  std::size_t infonce_blocks = 2;

  bool perceptual = false;
  double perceptual_weight = 1.0;
  std::set<std::size_t> perceptual_layers{0, 1};
  std::vector<std::size_t> extractor_widths{8, 16};
  std::uint64_t extractor_seed = 7;
  std::string extractor_weights;  // optional checkpoint-format file
};

struct ModelConfig {
  ViTConfig vit;
  DecoderConfig decoder;
  ObjectiveConfig objective;
  double mask_ratio = 0.75;

  /// Number of weighted reconstruction terms in the total loss.
  std::size_t loss_terms() const {
    switch (objective.mode) {
      case ObjectiveMode::Mirl: return vit.segments == 1 ? 1 : vit.segments / 2;
      case ObjectiveMode::Mae: return 1;
      default: return vit.segments;
    }
  }

  void validate() const {
    vit.validate();
    decoder.validate();
    check_mask_ratio(mask_ratio);
    const auto mode = objective.mode;
    if (mode == ObjectiveMode::Mae && vit.segments != 1) {
      throw ConfigError("objective.mode=mae requires model.segments=1 (got " +
                        std::to_string(vit.segments) + ")");
    }
    if ((mode == ObjectiveMode::CoarseToFine || mode == ObjectiveMode::FineToCoarse) &&
        vit.segments < 2) {
      throw ConfigError("objective.mode=" + to_string(mode) +
                        " needs an even model.segments >= 2 to split shallow and deep targets");
    }
    if (objective.lambda && objective.lambda->size() != loss_terms()) {
      throw ConfigError("objective.lambda lists " + std::to_string(objective.lambda->size()) +
                        " weights but model.segments=" + std::to_string(vit.segments) +
                        " with objective.mode=" + to_string(mode) + " yields " +
                        std::to_string(loss_terms()) + " loss terms");
    }
    if (objective.dagger_omega) {
      if (mode != ObjectiveMode::Mirl || vit.segments < 2) {
        throw ConfigError("objective.dagger applies only to objective.mode=mirl with model.segments >= 2");
      }
      if (*objective.dagger_omega < 0.0) throw ConfigError("objective.omega must be non-negative");
    }
    if (objective.infonce && (objective.tau <= 0.0 || objective.momentum < 0.0 || objective.momentum > 1.0)) {
      throw ConfigError("objective.tau must be positive and objective.momentum in [0, 1]");
    }
    if (objective.perceptual && objective.perceptual_layers.empty()) {
      throw ConfigError("objective.layers must name at least one extractor layer");
    }
    if (objective.perceptual && objective.extractor_weights.empty()) {
      for (auto l : objective.perceptual_layers) {
        if (l >= objective.extractor_widths.size()) {
          throw ConfigError("objective.layers names layer " + std::to_string(l) +
                            " but the extractor has " +
                            std::to_string(objective.extractor_widths.size()));
        }
      }
    }
  }
};

/// Per-term reconstruction targets as patch tensors [B, N, P*P*C].
template <class T>
struct ReconTargets {
  std::vector<Tensor<T>> per_term;
};

template <class T>
class MirlModel {
 public:
  MirlModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    encoder_ = Encoder<T>(store_, cfg_.vit, rng);
    decoders_ = DecoderStack<T>(store_, cfg_.vit, cfg_.decoder, rng);
    const auto& obj = cfg_.objective;
    if (obj.infonce) {
      const std::size_t d = cfg_.vit.hidden;
      for (std::size_t j = 0; j < obj.infonce_blocks; ++j) {
        feature_blocks_.push_back(TransformerBlock<T>::create(
            store_, "infonce.blocks." + std::to_string(j), d, cfg_.vit.mlp, cfg_.vit.heads, rng));
      }
      feature_norm_ = LayerNormParams<T>::create(store_, "infonce.norm", d, rng);
      momentum_store_ = std::make_unique<ParameterStore<T>>();
      Rng scratch(seed ^ 0x9e3779b97f4a7c15ULL);
      momentum_encoder_ = Encoder<T>(*momentum_store_, cfg_.vit, scratch);
      momentum_store_->copy_from(store_, "encoder.");
    }
    if (obj.perceptual) {
      if (!obj.extractor_weights.empty()) {
        extractor_ = std::make_unique<ConvExtractor<T>>(load_extractor_(obj.extractor_weights));
      } else {
        extractor_ = std::make_unique<ConvExtractor<T>>(cfg_.vit.channels, obj.extractor_widths,
                                                        obj.extractor_seed);
      }
      for (auto l : obj.perceptual_layers) {
        if (l >= extractor_->num_layers()) {
          throw ConfigError("objective.layers names layer " + std::to_string(l) +
                            " beyond the loaded extractor");
        }
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const DecoderStack<T>& decoders() const { return decoders_; }
  ParameterStore<T>* momentum_store() { return momentum_store_.get(); }

  /// Default loss weights: 2/G per pair for MIRL, 1/G per decoder for the
  /// multi-decoder modes, 1 for a single term.
  std::vector<double> lambda() const {
    if (cfg_.objective.lambda) return *cfg_.objective.lambda;
    const std::size_t n = cfg_.loss_terms();
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
  }

  ReconTargets<T> make_targets(const ImageBatch& img) const {
    const auto& vit = cfg_.vit;
    ReconTargets<T> t;
    const auto mode = cfg_.objective.mode;
    if (mode == ObjectiveMode::CoarseToFine || mode == ObjectiveMode::FineToCoarse) {
      auto cf = coarse_fine_targets(img, cfg_.objective.sigma);
      auto coarse = patchify<T>(cf.coarse, vit.patch), fine = patchify<T>(cf.fine, vit.patch);
      const auto order = mode == ObjectiveMode::CoarseToFine ? TargetOrder::CoarseToFine
                                                             : TargetOrder::FineToCoarse;
      for (std::size_t g = 1; g <= vit.segments; ++g) {
        t.per_term.push_back(&segment_target(cf, g, vit.segments, order) == &cf.coarse ? coarse : fine);
      }
      return t;
    }
    auto px = patchify<T>(img, vit.patch);
    if (cfg_.objective.norm_pix) px = normalize_patch_targets(px);
    t.per_term.assign(mode == ObjectiveMode::MultiDecoder ? vit.segments : 1, px);
    return t;
  }

  SegmentedEncoderState<T> encode(const Tensor<T>& input_patches, const MaskBatchPtr& plans) const {
    return encoder_.encode_segments(encoder_.embed_visible(input_patches, plans));
  }

  /// Predictions entering each loss term: combined x_hat + xi_hat per pair
  /// for MIRL and MAE, one reconstruction per decoder otherwise.
  std::vector<Tensor<T>> term_predictions(const SegmentedEncoderState<T>& state) const {
    std::vector<Tensor<T>> out;
    if (is_paired_()) {
      for (const auto& p : decoders_.decode_pairs(state)) out.push_back(p.combined());
    } else {
      out = decoders_.multi_decoder_outputs(state);
    }
    return out;
  }

  LossReport<T> loss(const Tensor<T>& input_patches, const MaskBatchPtr& plans,
                     const ReconTargets<T>& targets) const {
    auto state = encode(input_patches, plans);
    const auto lam = lambda();
    LossReport<T> report;
    std::vector<Tensor<T>> preds;
    if (is_paired_()) {
      auto pairs = decoders_.decode_pairs(state);
      report = total_loss(pairs, targets.per_term.at(0), *plans, lam, cfg_.objective.dagger_omega);
      for (const auto& p : pairs) preds.push_back(p.combined());
    } else {
      preds = decoders_.multi_decoder_outputs(state);
      if (targets.per_term.size() != preds.size()) {
        throw DimensionError("loss: " + std::to_string(targets.per_term.size()) + " targets for " +
                             std::to_string(preds.size()) + " decoders");
      }
      report.lambda = lam;
      Tensor<T> total;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        auto li = pixel_loss(preds[i], targets.per_term[i], *plans);
        report.per_pair.push_back(static_cast<double>(li.item()));
        auto term = scale(li, static_cast<T>(lam[i]));
        total = total.defined() ? add(total, term) : term;
      }
      report.total_tensor = total;
      report.total = static_cast<double>(total.item());
    }
    const auto& obj = cfg_.objective;
    if (obj.infonce) add_aux_term(report, "infonce", infonce_(state, input_patches, plans), obj.infonce_weight);
    if (obj.perceptual) {
      Tensor<T> aux;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& tgt = targets.per_term[is_paired_() ? 0 : i];
        auto mixed = mix_visible(preds[i], tgt, *plans);
        const auto& v = cfg_.vit;
        auto term = scale(perceptual_loss(patches_to_nhwc(mixed, v.patch, v.image_h, v.image_w),
                                          patches_to_nhwc(tgt, v.patch, v.image_h, v.image_w),
                                          *extractor_, obj.perceptual_layers),
                          static_cast<T>(lam[i]));
        aux = aux.defined() ? add(aux, term) : term;
      }
      add_aux_term(report, "perceptual", aux, obj.perceptual_weight);
    }
    return report;
  }

  LossReport<T> loss(const ImageBatch& img, const MaskBatchPtr& plans) const {
    return loss(patchify<T>(img, cfg_.vit.patch), plans, make_targets(img));
  }

  /// Bookkeeping after an optimizer step (momentum encoder).
  void after_step() {
    if (momentum_store_) momentum_update(store_, *momentum_store_, cfg_.objective.momentum, "encoder.");
  }

 private:
  bool is_paired_() const {
    return cfg_.objective.mode == ObjectiveMode::Mirl || cfg_.objective.mode == ObjectiveMode::Mae;
  }

  Tensor<T> infonce_(const SegmentedEncoderState<T>& state, const Tensor<T>& input_patches,
                     const MaskBatchPtr& plans) const {
    Tensor<T> h = state.per_segment.back().tokens;
    for (const auto& b : feature_blocks_) h = b(h);
    auto pred = mean_over(feature_norm_(h), 1);
    Tensor<T> positive;
    {
      NoGradGuard guard;
      auto out = momentum_encoder_.forward(momentum_encoder_.embed_visible(input_patches, plans));
      positive = mean_over(out.tokens, 1).detach();
    }
    return infonce_feature_loss(pred, positive, static_cast<T>(cfg_.objective.tau));
  }

  static ParameterStore<T> load_extractor_(const std::string& path) {
    return store_from_checkpoint<T>(load_checkpoint(path), "", false);
  }

  ModelConfig cfg_;
  ParameterStore<T> store_;
  Encoder<T> encoder_;
  DecoderStack<T> decoders_;
  std::vector<TransformerBlock<T>> feature_blocks_;
  LayerNormParams<T> feature_norm_;
  std::unique_ptr<ParameterStore<T>> momentum_store_;
  Encoder<T> momentum_encoder_;
  std::unique_ptr<ConvExtractor<T>> extractor_;
};

}  // namespace mirl
