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
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mirl/core/random.hpp"
#include "mirl/core/tensor.hpp"

namespace mirl {

enum class Init { TruncNormal, Zeros, Ones, Frozen };

/// A named trainable tensor. Names are dot paths such as
/// `encoder.blocks.3.attn.qkv.weight`; the block index is part of the path.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  Init init = Init::TruncNormal;
};

inline constexpr double kInitStd = 0.02;

template <class T>
void initialize(Tensor<T>& t, Init init, Rng& rng) {
  auto data = t.mutable_data();
  switch (init) {
    case Init::TruncNormal:
      for (auto& v : data) v = static_cast<T>(rng.trunc_normal(kInitStd));
      break;
    case Init::Zeros:
      std::fill(data.begin(), data.end(), T(0));
      break;
    case Init::Ones:
      std::fill(data.begin(), data.end(), T(1));
      break;
    case Init::Frozen:
      break;
  }
}

/// Ordered collection of uniquely named parameters.
template <class T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, Init init, Rng& rng) {
    auto t = Tensor<T>::zeros(std::move(shape), init != Init::Frozen);
    initialize(t, init, rng);
    return insert(name, t, init);
  }

  /// Registers an externally built tensor (e.g. fixed sin-cos tables).
  Tensor<T> insert(const std::string& name, Tensor<T> t, Init init) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back({name, t, init});
    return t;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Parameter<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return params_[it->second];
  }
  Parameter<T>& at(const std::string& name) {
    return const_cast<Parameter<T>&>(std::as_const(*this).at(name));
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<Parameter<T>*> with_prefix(std::string_view prefix) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_)
      if (std::string_view(p.name).starts_with(prefix)) out.push_back(&p);
    return out;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Independent copy of every tensor. `trainable` controls requires_grad
  /// on the copies (frozen entries stay frozen).
  ParameterStore deep_copy(bool trainable) const {
    ParameterStore out;
    for (const auto& p : params_) {
      auto t = Tensor<T>(p.tensor.shape(), p.tensor.values(), trainable && p.init != Init::Frozen);
      out.insert(p.name, t, p.init);
    }
    return out;
  }

  /// Copies values for every parameter of `other` whose name exists here.
  /// Shapes must agree. Returns the number of tensors copied.
  std::size_t copy_from(const ParameterStore& other, std::string_view prefix = {}) {
    std::size_t copied = 0;
    for (const auto& src : other.params_) {
      if (!std::string_view(src.name).starts_with(prefix)) continue;
      auto it = index_.find(src.name);
      if (it == index_.end()) continue;
      auto& dst = params_[it->second].tensor;
      if (dst.shape() != src.tensor.shape()) {
        throw DimensionError("parameter " + src.name + " has shape " +
                             shape_str(src.tensor.shape()) + ", expected " +
                             shape_str(dst.shape()));
      }
      std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.mutable_data().begin());
      ++copied;
    }
    return copied;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mirl
