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

// Dense matrix products shared by the differentiable ops, backed by CBLAS.
// All matrices are row-major and contiguous.

#include <cblas.h>

#include <cstddef>
#include <type_traits>

namespace mirl::kernels {

namespace detail {
template <class T>
void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, const T* a, const T* b, T* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (m == 0 || n == 0) return;
  const T beta = accumulate ? T(1) : T(0);
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m * n; ++i) c[i] = T(0);
    return;
  }
  const auto lda = static_cast<int>(ta == CblasNoTrans ? k : m);
  const auto ldb = static_cast<int>(tb == CblasNoTrans ? n : k);
  const auto M = static_cast<int>(m), N = static_cast<int>(n), K = static_cast<int>(k);
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, M, N, K, 1.0f, a, lda, b, ldb, beta, c, N);
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, M, N, K, 1.0, a, lda, b, ldb, beta, c, N);
  }
}
}  // namespace detail

/// C (+)= A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  detail::gemm(CblasNoTrans, CblasNoTrans, a, b, c, m, k, n, accumulate);
}

/// C (+)= A[m,k] * B[n,k]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  detail::gemm(CblasNoTrans, CblasTrans, a, b, c, m, k, n, accumulate);
}

/// C (+)= A[k,m]^T * B[k,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  detail::gemm(CblasTrans, CblasNoTrans, a, b, c, m, k, n, accumulate);
}

}  // namespace mirl::kernels
