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

#include "mirl/objectives/contrastive.hpp"

namespace mirl {

/// ema <- decay * ema + (1 - decay) * params, by name.
template <class T>
void ema_update(const ParameterStore<T>& params, ParameterStore<T>& ema, double decay) {
  momentum_update(params, ema, decay);
}

/// Maintains a frozen moving-average copy of a parameter store.
template <class T>
class ExponentialAverage {
 public:
  ExponentialAverage(const ParameterStore<T>& params, double decay)
      : decay_(decay), store_(params.deep_copy(false)) {}

  void update(const ParameterStore<T>& params) { ema_update(params, store_, decay_); }
  double decay() const { return decay_; }
  const ParameterStore<T>& store() const { return store_; }
  ParameterStore<T>& store() { return store_; }

 private:
  double decay_;
  ParameterStore<T> store_;
};

}  // namespace mirl
