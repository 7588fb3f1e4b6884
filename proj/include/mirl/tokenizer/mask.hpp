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
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "mirl/core/error.hpp"
#include "mirl/core/random.hpp"

namespace mirl {

/// Partition of patch indices 0..N-1 into visible and masked sets.
/// `visible` is the storage order of encoder tokens; it need not be sorted.
struct MaskPlan {
  std::size_t num_patches = 0;
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;

  /// Throws if the two sets are not a partition of 0..N-1.
  void validate() const {
    std::vector<int> seen(num_patches, 0);
    for (auto i : visible) {
      if (i >= num_patches || seen[i]++) throw Error("mask plan: bad visible index");
    }
    for (auto i : masked) {
      if (i >= num_patches || seen[i]++) throw Error("mask plan: bad masked index");
    }
    if (visible.size() + masked.size() != num_patches) {
      throw Error("mask plan does not cover every patch");
    }
  }

  /// is_masked[i] for every patch index.
  std::vector<bool> masked_flags() const {
    std::vector<bool> f(num_patches, false);
    for (auto i : masked) f[i] = true;
    return f;
  }
};

using MaskBatch = std::vector<MaskPlan>;
using MaskBatchPtr = std::shared_ptr<const MaskBatch>;

inline void check_mask_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("mask ratio " + std::to_string(ratio) + " outside [0, 1)");
  }
}

/// |M| = round(ratio * N).
inline std::size_t masked_count(std::size_t num_patches, double ratio) {
  check_mask_ratio(ratio);
  return static_cast<std::size_t>(std::lround(ratio * static_cast<double>(num_patches)));
}

/// Uniformly random subset of `round(ratio * N)` masked patches, drawn
/// without replacement. Both index lists are returned sorted.
inline MaskPlan sample_mask(std::size_t num_patches, double ratio, Rng& rng) {
  const std::size_t m = masked_count(num_patches, ratio);
  std::vector<std::size_t> perm(num_patches);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm.begin(), perm.end());
  MaskPlan plan;
  plan.num_patches = num_patches;
  plan.masked.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
  plan.visible.assign(perm.begin() + static_cast<std::ptrdiff_t>(m), perm.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

/// One independent plan per image.
inline MaskBatchPtr sample_masks(std::size_t batch, std::size_t num_patches, double ratio,
                                 Rng& rng) {
  auto plans = std::make_shared<MaskBatch>();
  plans->reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) plans->push_back(sample_mask(num_patches, ratio, rng));
  return plans;
}

/// Plan with nothing masked, used for feature extraction.
inline MaskBatchPtr full_visibility(std::size_t batch, std::size_t num_patches) {
  auto plans = std::make_shared<MaskBatch>();
  MaskPlan plan;
  plan.num_patches = num_patches;
  plan.visible.resize(num_patches);
  std::iota(plan.visible.begin(), plan.visible.end(), std::size_t{0});
  plans->assign(batch, plan);
  return plans;
}

inline void check_uniform_visible(const MaskBatch& plans) {
  if (plans.empty()) throw Error("empty mask batch");
  for (const auto& p : plans) {
    if (p.visible.size() != plans.front().visible.size() ||
        p.num_patches != plans.front().num_patches) {
      throw Error("mask plans in a batch must share N and |V|");
    }
  }
}

}  // namespace mirl
