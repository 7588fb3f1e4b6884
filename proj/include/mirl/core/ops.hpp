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
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mirl/core/kernels.hpp"
#include "mirl/core/tensor.hpp"

namespace mirl {

namespace detail {

enum class Broadcast { Same, Leading, TrailingSingleton };

inline Broadcast classify_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::Same;
  if (b.size() <= a.size() && std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return Broadcast::Leading;
  }
  if (b.size() == a.size() && !a.empty() && b.back() == 1 &&
      std::equal(b.begin(), b.end() - 1, a.begin())) {
    return Broadcast::TrailingSingleton;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                       shape_str(a));
}

// Visits (i, j) pairs in increasing i, where j indexes the broadcast operand.
template <class Fn>
inline void for_each_broadcast(Broadcast kind, std::size_t n, std::size_t nb, std::size_t last,
                               Fn&& fn) {
  switch (kind) {
    case Broadcast::Same:
      for (std::size_t i = 0; i < n; ++i) fn(i, i);
      return;
    case Broadcast::Leading:
      if (nb == 0) return;
      for (std::size_t base = 0; base < n; base += nb) {
        for (std::size_t j = 0; j < nb; ++j) fn(base + j, j);
      }
      return;
    case Broadcast::TrailingSingleton:
      if (last == 0) return;
      for (std::size_t r = 0, i = 0; i < n; ++r) {
        for (std::size_t k = 0; k < last; ++k, ++i) fn(i, r);
      }
      return;
  }
}

// Elementwise binary op where `b` is broadcast onto `a`. `fa`/`fb` give the
// partial derivatives given (a, b) element values.
template <class T, class F, class FA, class FB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, FA fa,
                    FB fb) {
  const auto kind = classify_broadcast(a.shape(), b.shape(), name);
  const std::size_t n = a.numel();
  const std::size_t nb = b.numel();
  const std::size_t last = a.rank() ? a.shape().back() : 1;
  std::vector<T> out(n);
  const T* av = a.data().data();
  const T* bv = b.data().data();
  T* ov = out.data();
  for_each_broadcast(kind, n, nb, last,
                     [&](std::size_t i, std::size_t j) { ov[i] = f(av[i], bv[j]); });
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(a.shape(), std::move(out), {&a, &b},
                        [an, bn, kind, n, nb, last, fa, fb](const std::vector<T>& g) {
                          const T* av = an->value.data();
                          const T* bv = bn->value.data();
                          const T* gv = g.data();
                          if (an->requires_grad) {
                            T* ga = an->grad_data();
                            for_each_broadcast(kind, n, nb, last,
                                               [&](std::size_t i, std::size_t j) {
                                                 ga[i] += gv[i] * fa(av[i], bv[j]);
                                               });
                          }
                          if (bn->requires_grad) {
                            T* gb = bn->grad_data();
                            for_each_broadcast(kind, n, nb, last,
                                               [&](std::size_t i, std::size_t j) {
                                                 gb[j] += gv[i] * fb(av[i], bv[j]);
                                               });
                          }
                        });
}

template <class T, class F, class DF>
Tensor<T> unary_op(const Tensor<T>& a, F f, DF df) {
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  const T* av = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  auto* an = a.node().get();
  return make_result<T>(a.shape(), std::move(out), {&a}, [an, n, df](const std::vector<T>& g) {
    T* ga = an->grad_data();
    const T* av = an->value.data();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * df(av[i]);
  });
}

inline std::size_t rows_of(const Shape& s) {
  if (s.empty()) return 1;
  return shape_numel(s) / (s.back() ? s.back() : 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape() && b.numel() > a.numel()) return add(b, a);
  return detail::binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape() && b.numel() > a.numel()) return mul(b, a);
  return detail::binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary_op(a, [s](T x) { return x * s; }, [s](T) { return s; });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

/// Exact (erf-based) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary_op(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) +
               x * inv_sqrt2pi * std::exp(T(-0.5) * x * x);
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  auto* an = a.node().get();
  return make_result<T>(Shape{}, {s}, {&a}, [an](const std::vector<T>& g) {
    T* ga = an->grad_data();
    for (std::size_t i = 0; i < an->value.size(); ++i) ga[i] += g[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Mean along `axis`; the axis is removed from the output shape.
template <class T>
Tensor<T> mean_over(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("mean_over: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
  }
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  std::vector<T> out(outer * inner, T(0));
  const T* av = a.data().data();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const T* row = av + (o * len + l) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  for (auto& v : out) v *= inv;
  auto* an = a.node().get();
  return make_result<T>(std::move(out_shape), std::move(out), {&a},
                        [an, outer, inner, len, inv](const std::vector<T>& g) {
                          T* ga = an->grad_data();
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t l = 0; l < len; ++l) {
                              T* dst = ga + (o * len + l) * inner;
                              const T* src = g.data() + o * inner;
                              for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Products
// ---------------------------------------------------------------------------

/// a[..., k] x b[k, n] -> [..., n]. Leading axes of `a` are flattened.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1);
  const std::size_t m = detail::rows_of(a.shape());
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(m * n);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(std::move(out_shape), std::move(out), {&a, &b},
                        [an, bn, m, k, n](const std::vector<T>& g) {
                          if (an->requires_grad) {
                            kernels::gemm_nt(g.data(), bn->value.data(), an->grad_data(), m, n,
                                             k, true);
                          }
                          if (bn->requires_grad) {
                            kernels::gemm_tn(an->value.data(), g.data(), bn->grad_data(), k, m,
                                             n, true);
                          }
                        });
}

/// a[m, k] x b[n, k]^T -> [m, n].
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<T> out(m * n);
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return make_result<T>(Shape{m, n}, std::move(out), {&a, &b},
                        [an, bn, m, k, n](const std::vector<T>& g) {
                          if (an->requires_grad) {
                            kernels::gemm_nn(g.data(), bn->value.data(), an->grad_data(), m, n,
                                             k, true);
                          }
                          if (bn->requires_grad) {
                            kernels::gemm_tn(g.data(), an->value.data(), bn->grad_data(), n, m,
                                             k, true);
                          }
                        });
}

/// x[..., in] W[in, out] + b[out]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Softmax along `axis`, stabilized by subtracting the running max.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis out of range for " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<T> out(x.numel());
  const T* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, xv[base + l * inner]);
      T z = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(xv[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  auto* xn = x.node().get();
  auto result = make_result<T>(s, std::move(out), {&x}, nullptr);
  if (result.requires_grad()) {
    auto* yn = result.node().get();
    // Captures the output's own value buffer; the node outlives its closure.
    yn->backward_fn = [xn, yn, outer, inner, len](const std::vector<T>& g) {
      T* gx = xn->grad_data();
      const T* y = yn->value.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = base + l * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    };
  }
  return result;
}

/// Layer normalization over the last axis. `gain`/`bias` may be undefined
/// for a parameter-free normalization.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-6)) {
  if (!(eps > T(0))) throw DimensionError("layer_norm: eps must be positive");
  const std::size_t c = x.shape().back();
  if ((gain.defined() && gain.numel() != c) || (bias.defined() && bias.numel() != c)) {
    throw DimensionError("layer_norm: affine parameters do not match width " +
                         std::to_string(c));
  }
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * c;
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < c; ++j) xhat[r * c + j] = (row[j] - mu) * rs;
  }
  std::vector<T> out(xhat);
  const T* gv = gain.defined() ? gain.data().data() : nullptr;
  const T* bv = bias.defined() ? bias.data().data() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      T v = out[r * c + j];
      if (gv) v *= gv[j];
      if (bv) v += bv[j];
      out[r * c + j] = v;
    }
  }
  auto* xn = x.node().get();
  auto* gn = gain.defined() ? gain.node().get() : nullptr;
  auto* bn = bias.defined() ? bias.node().get() : nullptr;
  return make_result<T>(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [xn, gn, bn, rows, c, xhat = std::move(xhat), rstd = std::move(rstd)](
          const std::vector<T>& g) {
        const T* gv = gn ? gn->value.data() : nullptr;
        if (gn && gn->requires_grad) {
          T* gg = gn->grad_data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * xhat[r * c + j];
        }
        if (bn && bn->requires_grad) {
          T* gb = bn->grad_data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
        }
        if (xn->requires_grad) {
          T* gx = xn->grad_data();
          std::vector<T> dxhat(c);
          for (std::size_t r = 0; r < rows; ++r) {
            T s1 = T(0), s2 = T(0);
            for (std::size_t j = 0; j < c; ++j) {
              dxhat[j] = g[r * c + j] * (gv ? gv[j] : T(1));
              s1 += dxhat[j];
              s2 += dxhat[j] * xhat[r * c + j];
            }
            const T inv_c = T(1) / static_cast<T>(c);
            for (std::size_t j = 0; j < c; ++j) {
              gx[r * c + j] +=
                  rstd[r] * (dxhat[j] - inv_c * s1 - xhat[r * c + j] * inv_c * s2);
            }
          }
        }
      });
}

/// Rows divided by their L2 norm (last axis).
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12)) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(x.numel());
  std::vector<T> norms(rows);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) s += xv[r * c + j] * xv[r * c + j];
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] / norms[r];
  }
  auto* xn = x.node().get();
  auto result = make_result<T>(x.shape(), std::move(out), {&x}, nullptr);
  if (result.requires_grad()) {
    auto* yn = result.node().get();
    yn->backward_fn = [xn, yn, rows, c, norms = std::move(norms)](const std::vector<T>& g) {
      T* gx = xn->grad_data();
      const T* y = yn->value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          gx[r * c + j] += (g[r * c + j] - y[r * c + j] * dot) / norms[r];
        }
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto* an = a.node().get();
  return make_result<T>(std::move(shape), a.values(), {&a}, [an](const std::vector<T>& g) {
    T* ga = an->grad_data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty input list");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(ref));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].data().data();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.data() + o * total * inner + offset);
    }
    offset += chunk;
  }
  std::vector<detail::Node<T>*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node().get());
  return make_result<T>(std::move(out_shape), std::move(out), parts,
                        [nodes, lens, outer, inner, total](const std::vector<T>& g) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                            const std::size_t chunk = lens[k] * inner;
                            if (nodes[k]->requires_grad) {
                              T* dst = nodes[k]->grad_data();
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* src = g.data() + o * total * inner + offset;
                                for (std::size_t i = 0; i < chunk; ++i) dst[o * chunk + i] += src[i];
                              }
                            }
                            offset += chunk;
                          }
                        });
}

/// Selects rows (last-axis vectors) of `x` by index; repeated indices are
/// allowed and their gradients accumulate. Output shape is [idx.size(), c].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> idx) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = detail::rows_of(x.shape());
  std::vector<T> out(idx.size() * c);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " >= " +
                           std::to_string(rows));
    }
    std::copy_n(xv + idx[r] * c, c, out.data() + r * c);
  }
  auto* xn = x.node().get();
  const std::size_t n = idx.size();
  return make_result<T>(Shape{n, c}, std::move(out), {&x},
                        [xn, c, idx = std::move(idx)](const std::vector<T>& g) {
                          T* gx = xn->grad_data();
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            T* dst = gx + idx[r] * c;
                            const T* src = g.data() + r * c;
                            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                          }
                        });
}

/// Columns [start, start+len) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t start, std::size_t len) {
  const std::size_t c = x.shape().back();
  if (start + len > c) throw DimensionError("slice_last: range exceeds width");
  const std::size_t rows = detail::rows_of(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = len;
  std::vector<T> out(rows * len);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv + r * c + start, len, out.data() + r * len);
  auto* xn = x.node().get();
  return make_result<T>(std::move(out_shape), std::move(out), {&x},
                        [xn, rows, c, start, len](const std::vector<T>& g) {
                          T* gx = xn->grad_data();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < len; ++j)
                              gx[r * c + start + j] += g[r * len + j];
                        });
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Mean cross-entropy of logits[B, K] against integer labels, with uniform
/// label smoothing.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        T smoothing = T(0)) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  std::vector<T> prob(b * k);
  const T* lv = logits.data().data();
  T loss = T(0);
  const T off = smoothing / static_cast<T>(k);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) +
                           " outside [0," + std::to_string(k) + ")");
    }
    const T* row = lv + i * k;
    T mx = *std::max_element(row, row + k);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const T logz = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) {
      prob[i * k + j] = std::exp(row[j] - logz);
      const T target = off + (static_cast<int>(j) == labels[i] ? T(1) - smoothing : T(0));
      loss -= target * (row[j] - logz);
    }
  }
  loss /= static_cast<T>(b);
  auto* ln = logits.node().get();
  return make_result<T>(Shape{}, {loss}, {&logits},
                        [ln, b, k, off, smoothing, labels, prob = std::move(prob)](
                            const std::vector<T>& g) {
                          T* gl = ln->grad_data();
                          const T s = g[0] / static_cast<T>(b);
                          for (std::size_t i = 0; i < b; ++i)
                            for (std::size_t j = 0; j < k; ++j) {
                              const T target =
                                  off + (static_cast<int>(j) == labels[i] ? T(1) - smoothing : T(0));
                              gl[i * k + j] += s * (prob[i * k + j] - target);
                            }
                        });
}

}  // namespace mirl
