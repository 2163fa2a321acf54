// Copyright 2026 The Orbit Metric Authors.
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

// Thin row-major GEMM/GEMV wrappers over Eigen. Internal to the kernels.

#include <cstddef>

#include <Eigen/Core>

namespace orbit::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;

template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// C[m,n] = op(A) * op(B), where op(A) is [m,k] and op(B) is [k,n].
/// A is stored [m,k] (or [k,m] when trans_a); B is [k,n] (or [n,k]).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c) {
  const auto M = Eigen::Index(m), N = Eigen::Index(n), K = Eigen::Index(k);
  MatMap<T> out(c, M, N);
  if (!trans_a && !trans_b) {
    out.noalias() = ConstMatMap<T>(a, M, K) * ConstMatMap<T>(b, K, N);
  } else if (trans_a && !trans_b) {
    out.noalias() = ConstMatMap<T>(a, K, M).transpose() * ConstMatMap<T>(b, K, N);
  } else if (!trans_a && trans_b) {
    out.noalias() = ConstMatMap<T>(a, M, K) * ConstMatMap<T>(b, N, K).transpose();
  } else {
    out.noalias() =
        ConstMatMap<T>(a, K, M).transpose() * ConstMatMap<T>(b, N, K).transpose();
  }
}

/// y[m] = op(A) x, A stored [m,k] (or [k,m] when trans_a).
template <typename T>
void gemv(bool trans_a, std::size_t m, std::size_t k, const T* a, const T* x, T* y) {
  const auto M = Eigen::Index(m), K = Eigen::Index(k);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> out(y, M);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> in(x, K);
  if (!trans_a) {
    out.noalias() = ConstMatMap<T>(a, M, K) * in;
  } else {
    out.noalias() = ConstMatMap<T>(a, K, M).transpose() * in;
  }
}

}  // namespace orbit::detail
