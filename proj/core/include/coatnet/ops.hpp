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

#ifndef COATNET_OPS_HPP_
#define COATNET_OPS_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet {

// Differentiable tensor primitives. Binary elementwise ops broadcast by the
// trailing-dimension rule (numpy semantics).

// Output shape of broadcasting `a` against `b`; throws ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// Division by an exact zero yields inf/nan; callers detect it with
// all_finite().
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);

enum class EwOp { kAdd, kSub, kMul, kDiv };
template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b);

// Reductions to a one-element tensor of shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int64_t>& perm);
// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// [.., m, k] x [.., k, n] -> [.., m, n] with broadcast leading dimensions.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Max-subtracted softmax along `axis` (negative counts from the back).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis);

// out.flat[i] = src.flat[indices[i]]; gradients scatter-add back.
template <typename T>
Tensor<T> gather(const Tensor<T>& src,
                 std::shared_ptr<const std::vector<int64_t>> indices,
                 const Shape& out_shape);

// Counts multiply-accumulates executed by matmul/conv kernels on the calling
// thread while alive. Nested counters all observe the work.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  int64_t count() const { return count_; }
  static void add(int64_t macs);

 private:
  int64_t count_ = 0;
  MacCounter* parent_ = nullptr;
};

}  // namespace coatnet

#endif  // COATNET_OPS_HPP_
