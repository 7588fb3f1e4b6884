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

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mirl/core/parameter.hpp"

namespace mirl {

struct GradCheckEntry {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (!(e.max_rel_err <= tolerance)) out.push_back(e.name);
    return out;
  }
  bool ok() const { return failures().empty(); }

  /// Throws an Error listing every parameter above tolerance.
  void require() const {
    auto bad = failures();
    if (bad.empty()) return;
    std::string msg = "gradient check failed for:";
    for (const auto& n : bad) msg += " " + n;
    throw Error(msg);
  }
};

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-5;
  /// Upper bound on elements probed per parameter; 0 checks all of them.
  /// When sampling, elements are taken at an even stride.
  std::size_t max_elements = 0;
  /// Lower bound on the normalizer, so parameters whose true gradient is
  /// zero are judged on absolute finite-difference noise.
  double scale_floor = 1e-6;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// The relative error of a parameter is max_i |a_i - n_i| divided by
/// max(max_i |a_i|, max_i |n_i|, scale_floor), i.e. normalized by the
/// parameter's largest gradient entry, so isolated near-zero components do
/// not dominate the verdict.
template <class T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f,
                           const std::vector<Parameter<T>*>& params,
                           const GradCheckOptions& opt = {}) {
  for (auto* p : params) p->tensor.zero_grad();
  f().backward();

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  NoGradGuard no_grad;
  for (auto* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    auto data = p->tensor.mutable_data();
    const std::size_t n = data.size();
    std::vector<T> analytic(n, T(0));
    if (p->tensor.has_grad()) {
      auto g = p->tensor.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    const std::size_t stride =
        (opt.max_elements == 0 || n <= opt.max_elements) ? 1 : n / opt.max_elements;
    double scale = 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const T saved = data[i];
      data[i] = saved + static_cast<T>(opt.step);
      const double fp = static_cast<double>(f().item());
      data[i] = saved - static_cast<T>(opt.step);
      const double fm = static_cast<double>(f().item());
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double a = static_cast<double>(analytic[i]);
      worst = std::max(worst, std::abs(a - numeric));
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
      ++e.checked;
    }
    e.max_abs_err = worst;
    e.max_rel_err = worst / std::max(scale, opt.scale_floor);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace mirl
