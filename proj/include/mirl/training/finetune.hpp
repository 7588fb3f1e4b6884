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
#include <numeric>
#include <vector>

#include "mirl/training/averaging.hpp"
#include "mirl/training/pretrain.hpp"

namespace mirl {

/// Mean over patch tokens [B, N+1, D] -> [B, D]; the class slot is excluded.
template <class T>
Tensor<T> pool_patch_tokens(const Tensor<T>& tokens) {
  const std::size_t b_count = tokens.dim(0), t = tokens.dim(1), d = tokens.dim(2);
  std::vector<std::size_t> rows;
  rows.reserve(b_count * (t - 1));
  for (std::size_t b = 0; b < b_count; ++b)
    for (std::size_t i = 1; i < t; ++i) rows.push_back(b * t + i);
  auto patches = reshape(gather_rows(reshape(tokens, Shape{b_count * t, d}), std::move(rows)),
                         Shape{b_count, t - 1, d});
  return mean_over(patches, 1);
}

/// Frozen-encoder features: pooled final tokens through a parameter-free
/// LayerNorm. Row-major [count, D].
template <class T>
std::vector<double> encoder_features(const Encoder<T>& enc, const ImageBatch& images,
                                     std::size_t chunk = 128) {
  NoGradGuard guard;
  const auto& cfg = enc.config();
  std::vector<double> out;
  out.reserve(images.batch * cfg.hidden);
  for (std::size_t s = 0; s < images.batch; s += chunk) {
    const std::size_t e = std::min(images.batch, s + chunk);
    std::vector<std::size_t> idx(e - s);
    std::iota(idx.begin(), idx.end(), s);
    ImageBatch part(e - s, images.channels, images.height, images.width);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto one = images.slice(idx[i]);
      std::copy(one.values.begin(), one.values.end(), part.values.begin() + static_cast<std::ptrdiff_t>(i * one.values.size()));
    }
    auto patches = patchify<T>(part, cfg.patch);
    auto z = enc.forward(enc.embed_visible(patches, full_visibility(part.batch, cfg.num_patches())));
    auto f = layer_norm(pool_patch_tokens(z.tokens), Tensor<T>{}, Tensor<T>{});
    for (T v : f.data()) out.push_back(static_cast<double>(v));
  }
  return out;
}

struct ProbeSpec {
  std::size_t epochs = 300;  // full-batch steps
  double lr = 0.05;
  double weight_decay = 1e-4;
};

struct LinearProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

inline double accuracy(const Tensor<double>& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t hit = 0;
  const auto& v = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    const auto* row = v.data() + i * c;
    const auto best = std::max_element(row, row + c) - row;
    hit += (best == labels[i]);
  }
  return n ? 100.0 * static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

/// Softmax regression on standardized features; deterministic full-batch
/// AdamW from zero initialization. Accuracies are percentages.
inline LinearProbeResult linear_probe(std::vector<double> train_x,
                                      const std::vector<int>& train_y,
                                      std::vector<double> test_x, const std::vector<int>& test_y,
                                      std::size_t dim, std::size_t classes,
                                      const ProbeSpec& spec) {
  const std::size_t n = train_y.size(), m = test_y.size();
  if (train_x.size() != n * dim || test_x.size() != m * dim) {
    throw DimensionError("linear_probe: feature matrix does not match label count");
  }
  for (std::size_t j = 0; j < dim; ++j) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += train_x[i * dim + j];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var += (train_x[i * dim + j] - mu) * (train_x[i * dim + j] - mu);
    const double rs = 1.0 / std::sqrt(var / static_cast<double>(n) + 1e-8);
    for (std::size_t i = 0; i < n; ++i) train_x[i * dim + j] = (train_x[i * dim + j] - mu) * rs;
    for (std::size_t i = 0; i < m; ++i) test_x[i * dim + j] = (test_x[i * dim + j] - mu) * rs;
  }
  Tensor<double> xtr(Shape{n, dim}, std::move(train_x)), xte(Shape{m, dim}, std::move(test_x));
  ParameterStore<double> store;
  Rng unused(0);
  auto w = store.add("probe.weight", Shape{dim, classes}, Init::Zeros, unused);
  auto b = store.add("probe.bias", Shape{classes}, Init::Zeros, unused);
  OptimSpec os;
  os.base_lr = spec.lr;
  os.batch_size = 256;  // peak lr equals spec.lr
  os.weight_decay = spec.weight_decay;
  os.beta2 = 0.999;
  AdamW<double> adam(os);
  for (std::size_t e = 0; e < spec.epochs; ++e) {
    store.zero_grad();
    cross_entropy(linear(xtr, w, b), train_y).backward();
    adam.step(store, spec.lr);
  }
  NoGradGuard guard;
  return {accuracy(linear(xtr, w, b), train_y), accuracy(linear(xte, w, b), test_y)};
}

template <class T>
LinearProbeResult probe_encoder(const Encoder<T>& enc, const Dataset& train,
                                const Dataset& test, const ProbeSpec& spec) {
  const std::size_t d = enc.config().hidden;
  const std::size_t classes = std::max(train.num_classes, test.num_classes);
  return linear_probe(encoder_features(enc, train.images), train.images.labels,
                      encoder_features(enc, test.images), test.images.labels, d, classes, spec);
}

/// Encoder plus a LayerNorm + linear classification head on pooled tokens.
template <class T>
class Classifier {
 public:
  Classifier(ParameterStore<T>& store, const ViTConfig& vit, std::size_t classes, Rng& rng)
      : encoder_(store, vit, rng),
        norm_(LayerNormParams<T>::create(store, "head.norm", vit.hidden, rng)),
        fc_(LinearParams<T>::create(store, "head.fc", vit.hidden, classes, rng)) {}

  const Encoder<T>& encoder() const { return encoder_; }

  Tensor<T> logits(const ImageBatch& images) const {
    const auto& cfg = encoder_.config();
    auto z = encoder_.forward(encoder_.embed_visible(
        patchify<T>(images, cfg.patch), full_visibility(images.batch, cfg.num_patches())));
    return fc_(norm_(pool_patch_tokens(z.tokens)));
  }

 private:
  Encoder<T> encoder_;
  LayerNormParams<T> norm_;
  LinearParams<T> fc_;
};

struct FinetuneSpec {
  OptimSpec optim = [] {
    OptimSpec s;
    s.base_lr = 7.5e-4;
    s.beta2 = 0.999;
    s.batch_size = 64;
    s.warmup_epochs = 1;
    s.total_epochs = 10;
    return s;
  }();
  double layer_decay = 0.75;
  double label_smoothing = 0.1;
  double ema_decay = 0.9998;
  bool augment = true;
  double min_scale = 0.2;
};

struct FinetuneResult {
  double accuracy = 0.0;      // final weights, percent
  double ema_accuracy = 0.0;  // moving-average weights, percent
  std::size_t steps = 0;
};

template <class T>
double classifier_accuracy(const Classifier<T>& clf, const Dataset& ds, std::size_t chunk = 128) {
  NoGradGuard guard;
  std::size_t hit = 0;
  for (std::size_t s = 0; s < ds.size(); s += chunk) {
    std::vector<std::size_t> idx(std::min(ds.size(), s + chunk) - s);
    std::iota(idx.begin(), idx.end(), s);
    auto batch = make_batch(ds, idx, nullptr);
    auto lg = clf.logits(batch);
    const std::size_t c = lg.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const T* row = lg.data().data() + i * c;
      hit += (std::max_element(row, row + c) - row) == batch.labels[i];
    }
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(ds.size());
}

/// Full fine-tuning. `pretrained` supplies encoder.* tensors (may be empty
/// for a from-scratch baseline).
template <class T>
FinetuneResult finetune(const ParameterStore<T>& pretrained, const ViTConfig& vit,
                        const Dataset& train, const Dataset& test, const FinetuneSpec& spec,
                        std::uint64_t seed, MetricsWriter* writer = nullptr) {
  RngRoles roles{seed};
  ParameterStore<T> store;
  auto init = roles.at(RngRoles::kInit);
  Classifier<T> clf(store, vit, std::max(train.num_classes, test.num_classes), init);
  store.copy_from(pretrained, "encoder.");
  OptimSpec os = spec.optim;
  if (train.size() < os.batch_size) throw ConfigError("fine-tune set smaller than batch size");
  os.steps_per_epoch = train.size() / os.batch_size;
  os.validate();
  AdamW<T> adam(os);
  adam.set_lr_multipliers(layer_decay_multipliers(store, vit.depth, spec.layer_decay));
  ExponentialAverage<T> ema(store, spec.ema_decay);
  std::vector<std::size_t> perm(train.size());
  const std::size_t total = os.total_steps();
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t epoch = step / os.steps_per_epoch, slot = step % os.steps_per_epoch;
    if (slot == 0) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      auto r = roles.at(RngRoles::kData, epoch);
      r.shuffle(perm.begin(), perm.end());
    }
    std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(slot * os.batch_size),
                                 perm.begin() + static_cast<std::ptrdiff_t>((slot + 1) * os.batch_size));
    auto aug = roles.at(RngRoles::kAugment, step);
    auto batch = make_batch(train, idx, spec.augment ? &aug : nullptr, spec.min_scale);
    std::vector<int> labels(batch.labels.begin(), batch.labels.end());
    auto loss = cross_entropy(clf.logits(batch), labels, static_cast<T>(spec.label_smoothing));
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericError("non-finite fine-tuning loss at step " + std::to_string(step));
    }
    store.zero_grad();
    loss.backward();
    const double lr = lr_at(os, step);
    adam.step(store, lr);
    ema.update(store);
    if (writer) {
      writer->write({{"step", step}, {"lr", lr}, {"loss", static_cast<double>(loss.item())}});
    }
  }
  FinetuneResult res;
  res.steps = total;
  res.accuracy = classifier_accuracy(clf, test);
  auto backup = store.deep_copy(false);
  store.copy_from(ema.store());
  res.ema_accuracy = classifier_accuracy(clf, test);
  store.copy_from(backup);
  return res;
}

}  // namespace mirl
