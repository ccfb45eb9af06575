/* Copyright 2026 The coatnet-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef COATNET_SRC_KERNELS_HPP_
#define COATNET_SRC_KERNELS_HPP_

#include <algorithm>
#include <cstdint>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet::kernels {

// Row-major C[M,N] (+)= op(A) op(B) where op(A) is [M,K] and op(B) is [K,N].
// A is stored [M,K] (or [K,M] when trans_a), B is [K,N] (or [N,K]).
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t M, int64_t N, int64_t K,
          const T* __restrict A, const T* __restrict B, T* __restrict C,
          bool accumulate) {
  if (!accumulate) std::fill(C, C + M * N, T(0));
  if (!trans_a && !trans_b) {
    for (int64_t i = 0; i < M; ++i) {
      T* c = C + i * N;
      const T* a = A + i * K;
      for (int64_t k = 0; k < K; ++k) {
        const T av = a[k];
        const T* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (int64_t i = 0; i < M; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) {
        const T* b = B + j * K;
        T acc = T(0);
        for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int64_t k = 0; k < K; ++k) {
      const T* a = A + k * M;
      const T* b = B + k * N;
      for (int64_t i = 0; i < M; ++i) {
        const T av = a[i];
        T* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
      }
    }
  } else {
    for (int64_t i = 0; i < M; ++i) {
      for (int64_t j = 0; j < N; ++j) {
        T acc = T(0);
        for (int64_t k = 0; k < K; ++k) acc += A[k * M + i] * B[j * K + k];
        C[i * N + j] += acc;
      }
    }
  }
}

// Odometer over a broadcast output shape. `fn(out_index, a_offset, b_offset)`
// is called for every output element; strides are 0 on broadcast axes.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& stride_a,
                        const std::vector<int64_t>& stride_b, Fn&& fn) {
  const int64_t rank = static_cast<int64_t>(out.size());
  const int64_t total = shape_numel(out);
  const int64_t inner = out[rank - 1];
  const int64_t sa = stride_a[rank - 1];
  const int64_t sb = stride_b[rank - 1];
  std::vector<int64_t> idx(rank, 0);
  int64_t ia = 0;
  int64_t ib = 0;
  for (int64_t o = 0; o < total; o += inner) {
    for (int64_t j = 0; j < inner; ++j) fn(o + j, ia + j * sa, ib + j * sb);
    for (int64_t d = rank - 2; d >= 0; --d) {
      ++idx[d];
      ia += stride_a[d];
      ib += stride_b[d];
      if (idx[d] < out[d]) break;
      ia -= stride_a[d] * out[d];
      ib -= stride_b[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Strides of `in` when broadcast against `out` (right-aligned, 0 where the
// input extent is 1 or the axis is missing).
inline std::vector<int64_t> broadcast_strides(const Shape& in,
                                              const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t stride = 1;
  const int64_t offset =
      static_cast<int64_t>(out.size()) - static_cast<int64_t>(in.size());
  for (int64_t d = static_cast<int64_t>(in.size()) - 1; d >= 0; --d) {
    strides[d + offset] = in[d] == 1 ? 0 : stride;
    stride *= in[d];
  }
  return strides;
}

}  // namespace coatnet::kernels

#endif  // COATNET_SRC_KERNELS_HPP_
