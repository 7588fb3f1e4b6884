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
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mirl/core/error.hpp"
#include "mirl/training/finetune.hpp"

namespace mirl {

/// One measurement: probe `probe` at sweep point `sweep_var` for `seed`.
struct ProbeRecord {
  std::string probe;
  double sweep_var = 0.0;
  std::uint64_t seed = 0;
  double metric = 0.0;
};

struct PointSummary {
  double sweep_var = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 with a single seed
  std::size_t count = 0;
};

struct ProbeResult {
  std::string probe;
  std::vector<ProbeRecord> records;
  std::vector<std::uint64_t> seeds;

  /// Mean and variance per sweep point, ordered by sweep value.
  std::vector<PointSummary> summary() const {
    std::map<double, std::vector<double>> by_point;
    for (const auto& r : records) by_point[r.sweep_var].push_back(r.metric);
    std::vector<PointSummary> out;
    for (const auto& [x, v] : by_point) {
      PointSummary s{x, 0.0, 0.0, v.size()};
      for (double m : v) s.mean += m;
      s.mean /= static_cast<double>(v.size());
      if (v.size() > 1) {
        for (double m : v) s.variance += (m - s.mean) * (m - s.mean);
        s.variance /= static_cast<double>(v.size() - 1);
      }
      out.push_back(s);
    }
    return out;
  }
};

/// Columns: probe, sweep_var, seed, metric.
inline void write_probe_csv(const std::string& path, const ProbeResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  out << "probe,sweep_var,seed,metric\n";
  for (const auto& r : result.records) {
    out << r.probe << ',' << r.sweep_var << ',' << r.seed << ',' << r.metric << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

/// Columns: probe, sweep_var, mean, variance, seeds.
inline void write_probe_summary_csv(const std::string& path, const ProbeResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.precision(17);
  out << "probe,sweep_var,mean,variance,seeds\n";
  for (const auto& s : result.summary()) {
    out << result.probe << ',' << s.sweep_var << ',' << s.mean << ',' << s.variance << ','
        << s.count << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

/// How a probed encoder is scored: a linear probe on frozen features by
/// default, full fine-tuning when `use_finetune` is set.
struct EvalSpec {
  bool use_finetune = false;
  ProbeSpec probe;
  FinetuneSpec finetune;
};

/// Builds a store holding a full encoder for `vit` with its init metadata,
/// then overwrites every encoder tensor that `weights` provides.
template <class T>
ParameterStore<T> encoder_store(const ViTConfig& vit, const ParameterStore<T>& weights,
                                std::uint64_t init_seed) {
  ParameterStore<T> store;
  Rng rng(init_seed);
  Encoder<T> enc(store, vit, rng);
  store.copy_from(weights, "encoder.");
  return store;
}

/// Accuracy (percent) of the encoder weights in `weights`.
template <class T>
double evaluate_encoder(const ParameterStore<T>& weights, const ViTConfig& vit,
                        const Dataset& train, const Dataset& test, const EvalSpec& spec,
                        std::uint64_t seed) {
  if (spec.use_finetune) return finetune(weights, vit, train, test, spec.finetune, seed).accuracy;
  ParameterStore<T> store;
  Rng rng(seed);
  Encoder<T> enc(store, vit, rng);
  store.copy_from(weights, "encoder.");
  return probe_encoder(enc, train, test, spec.probe).test_accuracy;
}

}  // namespace mirl
