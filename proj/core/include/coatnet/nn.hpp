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

#ifndef COATNET_NN_HPP_
#define COATNET_NN_HPP_

#include <cstdint>
#include <string>

#include "coatnet/tensor.hpp"

namespace coatnet {

// Feature maps are channels-last: [N, H, W, C].

enum class Padding { kSame, kValid };

// Output extent of a convolution/pooling window. Same padding gives
// ceil(in / stride) and puts the odd padding element on the bottom/right.
int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride,
                        Padding padding);
int64_t same_pad_before(int64_t in, int64_t kernel, int64_t stride);

template <typename T>
struct ConvParams {
  Tensor<T> kernel;  // [kh, kw, c_in / groups, c_out]
  Tensor<T> bias;    // [c_out], or undefined for no bias
  int64_t stride = 1;
  Padding padding = Padding::kSame;
  int64_t groups = 1;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

enum class NormKind { kBatch, kLayer };

const char* to_string(NormKind kind);
NormKind norm_kind_from_string(const std::string& s);

// Affine normalization over the channel axis (last axis). Batch kind
// normalises each channel over every other axis and tracks running
// statistics; layer kind normalises each position over its channels.
template <typename T>
struct NormParams {
  NormKind kind = NormKind::kBatch;
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;  // batch kind only
  Tensor<T> running_var;   // batch kind only
  double epsilon = 1e-3;
  double momentum = 0.99;

  static NormParams make(NormKind kind, int64_t channels);
};

// In training mode the batch kind updates running_mean/var in place:
// running = momentum * running + (1 - momentum) * batch_statistic.
template <typename T>
Tensor<T> norm(const Tensor<T>& x, NormParams<T>& p, bool training);

// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// 2x2 window, stride 2, same padding. Ties route the gradient to the first
// maximum in row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x);

// [N, H, W, C] -> [N, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// x[..., d_in] * w[d_in, d_out] (+ b[d_out]).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct SqueezeExciteParams {
  Tensor<T> w1;  // [C, C/4]
  Tensor<T> b1;  // [C/4]
  Tensor<T> w2;  // [C/4, C]
  Tensor<T> b2;  // [C]
};

// x * sigmoid(gelu(gap(x) w1 + b1) w2 + b2), gate broadcast over H and W.
template <typename T>
Tensor<T> squeeze_excite(const Tensor<T>& x, const SqueezeExciteParams<T>& p);

}  // namespace coatnet

#endif  // COATNET_NN_HPP_
