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
#include <set>
#include <string>
#include <vector>

#include "mirl/core/conv.hpp"
#include "mirl/core/parameter.hpp"
#include "mirl/tokenizer/mask.hpp"
#include "mirl/tokenizer/patch.hpp"

namespace mirl {

/// Fixed multi-layer feature map applied to channel-last images [B,H,W,C].
template <class T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t num_layers() const = 0;
  /// Activations of every layer, each [B, H_l, W_l, C_l].
  virtual std::vector<Tensor<T>> features(const Tensor<T>& image) const = 0;
};

/// Single layer returning its input.
template <class T>
class IdentityExtractor : public FeatureExtractor<T> {
 public:
  std::size_t num_layers() const override { return 1; }
  std::vector<Tensor<T>> features(const Tensor<T>& image) const override { return {image}; }
};

/// Stack of 3x3 conv + ReLU layers with frozen weights. Weights are drawn
/// from a seed, or loaded from a named-tensor file with entries
/// `extractor.conv<i>.weight` [9*Cin, Cout] and `extractor.conv<i>.bias`.
template <class T>
class ConvExtractor : public FeatureExtractor<T> {
 public:
  ConvExtractor(std::size_t in_channels, const std::vector<std::size_t>& widths,
                std::uint64_t seed) {
    Rng rng(seed);
    std::size_t cin = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::size_t fan_in = 9 * cin;
      auto w = Tensor<T>::zeros(Shape{fan_in, widths[i]});
      const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : w.mutable_data()) v = static_cast<T>(rng.normal() * std);
      const std::string prefix = "extractor.conv" + std::to_string(i);
      store_.insert(prefix + ".weight", w, Init::Frozen);
      store_.insert(prefix + ".bias", Tensor<T>::zeros(Shape{widths[i]}), Init::Frozen);
      cin = widths[i];
    }
    layers_ = widths.size();
  }

  explicit ConvExtractor(ParameterStore<T> store) : store_(std::move(store)) {
    while (store_.contains("extractor.conv" + std::to_string(layers_) + ".weight")) ++layers_;
    if (layers_ == 0) throw Error("extractor weights contain no extractor.conv0.weight");
  }

  std::size_t num_layers() const override { return layers_; }
  const ParameterStore<T>& weights() const { return store_; }

  std::vector<Tensor<T>> features(const Tensor<T>& image) const override {
    std::vector<Tensor<T>> out;
    Tensor<T> h = image;
    for (std::size_t i = 0; i < layers_; ++i) {
      const std::string prefix = "extractor.conv" + std::to_string(i);
      h = relu(conv2d(h, store_.at(prefix + ".weight").tensor, store_.at(prefix + ".bias").tensor, 3));
      out.push_back(h);
    }
    return out;
  }

 private:
  ParameterStore<T> store_;
  std::size_t layers_ = 0;
};

/// Prediction at masked positions, ground truth at visible positions.
template <class T>
Tensor<T> mix_visible(const Tensor<T>& pred, const Tensor<T>& target, const MaskBatch& plans) {
  const std::size_t b_count = pred.dim(0), n = pred.dim(1), k = pred.dim(2);
  auto pool = concat<T>({reshape(pred, Shape{b_count * n, k}),
                         reshape(target, Shape{b_count * n, k})},
                        0);
  std::vector<std::size_t> idx(b_count * n);
  for (std::size_t b = 0; b < b_count; ++b) {
    auto flags = plans[b].masked_flags();
    for (std::size_t i = 0; i < n; ++i) idx[b * n + i] = (flags[i] ? 0 : b_count * n) + b * n + i;
  }
  return reshape(gather_rows(pool, std::move(idx)), pred.shape());
}

/// sum_{l in layers} (1/(C_l H_l W_l)) ||f_l(x) - f_l(mixed)||^2, averaged
/// over the batch. Images are channel-last [B, H, W, C].
template <class T>
Tensor<T> perceptual_loss(const Tensor<T>& mixed, const Tensor<T>& target,
                          const FeatureExtractor<T>& extractor,
                          const std::set<std::size_t>& layers) {
  if (layers.empty()) throw ConfigError("perceptual loss needs at least one layer");
  if (mixed.shape() != target.shape()) throw DimensionError("perceptual_loss: shape mismatch");
  for (auto l : layers) {
    if (l >= extractor.num_layers()) {
      throw ConfigError("perceptual layer " + std::to_string(l) + " not provided by extractor");
    }
  }
  auto fx = extractor.features(target);
  auto fm = extractor.features(mixed);
  const std::size_t b_count = mixed.dim(0);
  Tensor<T> total;
  for (auto l : layers) {
    const std::size_t per_image = fx[l].numel() / b_count;
    auto term = scale(sum(square(sub(fx[l], fm[l]))),
                      T(1) / static_cast<T>(per_image * b_count));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

}  // namespace mirl
