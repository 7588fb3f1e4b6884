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

#include <numeric>
#include <vector>

#include "mirl/core/ops.hpp"
#include "mirl/core/parameter.hpp"

namespace mirl {

/// InfoNCE over a batch of feature vectors. Row b of `pred` is paired with
/// row b of `positive`; the other B-1 rows of `positive` act as negatives.
/// Both sides are L2-normalized before the dot products.
template <class T>
Tensor<T> infonce_feature_loss(const Tensor<T>& pred, const Tensor<T>& positive, T tau) {
  if (!(tau > T(0))) throw ConfigError("objective.tau must be positive");
  if (pred.rank() != 2 || pred.shape() != positive.shape()) {
    throw DimensionError("infonce: prediction " + shape_str(pred.shape()) + " vs positive " +
                         shape_str(positive.shape()));
  }
  const std::size_t b = pred.dim(0);
  if (b < 2) throw Error("infonce needs at least two images per batch");
  auto logits = scale(matmul_nt(l2_normalize(pred), l2_normalize(positive)), T(1) / tau);
  std::vector<int> labels(b);
  std::iota(labels.begin(), labels.end(), 0);
  return cross_entropy(logits, labels);
}

/// theta_m <- m * theta_m + (1 - m) * theta for every parameter of `online`
/// under `prefix`. Parameter names must match one-to-one.
template <class T>
void momentum_update(const ParameterStore<T>& online, ParameterStore<T>& momentum, double m,
                     std::string_view prefix = {}) {
  if (m < 0.0 || m > 1.0) throw ConfigError("momentum coefficient outside [0, 1]");
  for (const auto& p : online) {
    if (!std::string_view(p.name).starts_with(prefix)) continue;
    if (!momentum.contains(p.name)) throw Error("momentum update: missing parameter " + p.name);
    auto& dst = momentum.at(p.name).tensor;
    if (dst.shape() != p.tensor.shape()) throw DimensionError("momentum update: shape of " + p.name);
    auto d = dst.mutable_data();
    auto s = p.tensor.data();
    const T mm = static_cast<T>(m), om = static_cast<T>(1.0 - m);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mm * d[i] + om * s[i];
  }
}

}  // namespace mirl
