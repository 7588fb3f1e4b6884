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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mirl/decoder/decoder.hpp"
#include "mirl/tokenizer/mask.hpp"

namespace mirl {

/// Mean squared error over masked patches only:
///   (1/B) sum_b (1/|M|) sum_{i in M_b} (1/K) ||pred_i - target_i||^2
/// with K = P*P*C. Target values at visible positions are never read.
template <class T>
Tensor<T> pixel_loss(const Tensor<T>& pred, const Tensor<T>& target, const MaskBatch& plans) {
  if (pred.shape() != target.shape() || pred.rank() != 3) {
    throw DimensionError("pixel_loss: prediction " + shape_str(pred.shape()) +
                         " vs target " + shape_str(target.shape()));
  }
  const std::size_t b_count = pred.dim(0), n = pred.dim(1), k = pred.dim(2);
  if (plans.size() != b_count) throw DimensionError("pixel_loss: one mask plan per image needed");
  const std::size_t m = plans.front().masked.size();
  if (m == 0) throw Error("pixel_loss: no masked patches");
  for (const auto& p : plans) {
    if (p.masked.size() != m || p.num_patches != n) {
      throw DimensionError("pixel_loss: mask plans disagree on |M| or N");
    }
  }
  const T* pv = pred.data().data();
  const T* tv = target.data().data();
  T total = T(0);
  for (std::size_t b = 0; b < b_count; ++b) {
    T per_image = T(0);
    for (auto i : plans[b].masked) {
      const std::size_t off = (b * n + i) * k;
      T s = T(0);
      for (std::size_t j = 0; j < k; ++j) {
        const T d = pv[off + j] - tv[off + j];
        s += d * d;
      }
      per_image += s / static_cast<T>(k);
    }
    total += per_image / static_cast<T>(m);
  }
  total /= static_cast<T>(b_count);

  auto* pn = pred.node().get();
  auto* tn = target.node().get();
  std::vector<std::vector<std::size_t>> masked;
  for (const auto& p : plans) masked.push_back(p.masked);
  const T coef = T(2) / static_cast<T>(b_count * m * k);
  return make_result<T>(Shape{}, {total}, {&pred, &target},
                        [pn, tn, masked = std::move(masked), n, k, coef](const std::vector<T>& g) {
                          const T* pv = pn->value.data();
                          const T* tv = tn->value.data();
                          T* gp = pn->requires_grad ? pn->grad_data() : nullptr;
                          T* gt = tn->requires_grad ? tn->grad_data() : nullptr;
                          for (std::size_t b = 0; b < masked.size(); ++b)
                            for (auto i : masked[b]) {
                              const std::size_t off = (b * n + i) * k;
                              for (std::size_t j = 0; j < k; ++j) {
                                const T d = g[0] * coef * (pv[off + j] - tv[off + j]);
                                if (gp) gp[off + j] += d;
                                if (gt) gt[off + j] -= d;
                              }
                            }
                        });
}

/// Per-patch standardized targets (mean 0, variance 1 within each patch).
template <class T>
Tensor<T> normalize_patch_targets(const Tensor<T>& target, T eps = T(1e-6)) {
  const std::size_t k = target.shape().back();
  std::vector<T> out(target.values());
  for (std::size_t r = 0; r < out.size() / k; ++r) {
    T* p = out.data() + r * k;
    T mu = T(0), var = T(0);
    for (std::size_t j = 0; j < k; ++j) mu += p[j];
    mu /= static_cast<T>(k);
    for (std::size_t j = 0; j < k; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= static_cast<T>(k > 1 ? k - 1 : 1);
    const T rs = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < k; ++j) p[j] = (p[j] - mu) * rs;
  }
  return Tensor<T>(target.shape(), std::move(out));
}

/// L_g: reconstruction error of main + residual against the target.
template <class T>
Tensor<T> residual_pair_loss(const PairOutputs<T>& pair, const Tensor<T>& target,
                             const MaskBatch& plans) {
  return pixel_loss(pair.combined(), target, plans);
}

/// L_g plus an omega-weighted penalty pulling the main component alone
/// toward the target.
template <class T>
Tensor<T> variant_loss_dagger(const PairOutputs<T>& pair, const Tensor<T>& target,
                              const MaskBatch& plans, T omega) {
  if (omega < T(0)) throw ConfigError("objective.dagger_omega must be non-negative");
  auto lg = residual_pair_loss(pair, target, plans);
  if (omega == T(0)) return lg;
  return add(scale(pixel_loss(pair.main, target, plans), omega), lg);
}

/// Breakdown of one loss evaluation.
template <class T>
struct LossReport {
  std::vector<double> per_pair;  // L_g, or one entry per decoder for multi-decoder modes
  std::vector<double> lambda;
  std::map<std::string, double> aux;
  double total = 0.0;
  Tensor<T> total_tensor;  // differentiable scalar
};

/// Default pair weights: 2/G for G/2 pairs; a lone main-only output gets 1.
template <class T>
std::vector<double> default_pair_weights(const std::vector<PairOutputs<T>>& pairs) {
  if (pairs.size() == 1 && !pairs.front().residual.defined()) return {1.0};
  return std::vector<double>(pairs.size(), 1.0 / static_cast<double>(pairs.size()));
}

/// Weighted sum of pair losses, sum_g lambda_g L_g (optionally the dagger
/// variant of each term).
template <class T>
LossReport<T> total_loss(const std::vector<PairOutputs<T>>& pairs, const Tensor<T>& target,
                         const MaskBatch& plans,
                         const std::optional<std::vector<double>>& lambda = std::nullopt,
                         std::optional<double> dagger_omega = std::nullopt) {
  if (pairs.empty()) throw Error("total_loss: no pair outputs");
  LossReport<T> report;
  report.lambda = lambda ? *lambda : default_pair_weights(pairs);
  if (report.lambda.size() != pairs.size()) {
    throw ConfigError("objective.lambda has " + std::to_string(report.lambda.size()) +
                      " weights for " + std::to_string(pairs.size()) + " segment pairs");
  }
  Tensor<T> total;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto lg = dagger_omega ? variant_loss_dagger(pairs[i], target, plans, static_cast<T>(*dagger_omega))
                           : residual_pair_loss(pairs[i], target, plans);
    report.per_pair.push_back(static_cast<double>(lg.item()));
    auto term = scale(lg, static_cast<T>(report.lambda[i]));
    total = total.defined() ? add(total, term) : term;
  }
  report.total_tensor = total;
  report.total = static_cast<double>(total.item());
  return report;
}

/// Adds a weighted auxiliary term to a report.
template <class T>
void add_aux_term(LossReport<T>& report, const std::string& name, const Tensor<T>& term,
                  double weight) {
  report.aux[name] = static_cast<double>(term.item());
  report.total_tensor = add(report.total_tensor, scale(term, static_cast<T>(weight)));
  report.total = static_cast<double>(report.total_tensor.item());
}

}  // namespace mirl
