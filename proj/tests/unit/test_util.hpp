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

#ifndef COATNET_TESTS_TEST_UTIL_HPP_
#define COATNET_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet::testing {

using TD = Tensor<double>;
using TF = Tensor<float>;

// Untruncated N(0, stddev^2) values.
template <typename T = double>
Tensor<T> randn(const Shape& shape, uint64_t seed, double stddev = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(normal(rng));
  return Tensor<T>(shape, std::move(v));
}

// Row-major flat index of an NHWC element.
inline int64_t nhwc(const Shape& s, int64_t n, int64_t h, int64_t w,
                    int64_t c) {
  return ((n * s[1] + h) * s[2] + w) * s[3] + c;
}

// Direct convolution with explicit padding offsets; kernel [kh, kw, cin/g, cout].
inline std::vector<double> naive_conv(const TD& x, const TD& k, int64_t stride,
                                      int64_t groups, int64_t pad_top,
                                      int64_t pad_left, int64_t out_h,
                                      int64_t out_w) {
  const Shape& xs = x.shape();
  const Shape& ks = k.shape();
  const int64_t n = xs[0], h = xs[1], w = xs[2], cin = xs[3];
  const int64_t kh = ks[0], kw = ks[1], cpg = ks[2], cout = ks[3];
  const int64_t opg = cout / groups;
  std::vector<double> out(n * out_h * out_w * cout, 0.0);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oy = 0; oy < out_h; ++oy)
      for (int64_t ox = 0; ox < out_w; ++ox)
        for (int64_t co = 0; co < cout; ++co) {
          const int64_t g = co / opg;
          double acc = 0.0;
          for (int64_t dy = 0; dy < kh; ++dy)
            for (int64_t dx = 0; dx < kw; ++dx) {
              const int64_t iy = oy * stride + dy - pad_top;
              const int64_t ix = ox * stride + dx - pad_left;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              for (int64_t ci = 0; ci < cpg; ++ci) {
                const int64_t c = g * cpg + ci;
                (void)cin;
                acc += x.ptr()[((b * h + iy) * w + ix) * xs[3] + c] *
                       k.ptr()[((dy * kw + dx) * cpg + ci) * cout + co];
              }
            }
          out[((b * out_h + oy) * out_w + ox) * cout + co] = acc;
        }
  return out;
}

inline double max_abs(const std::vector<double>& a, const TD& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b.ptr()[i]));
  }
  return m;
}

}  // namespace coatnet::testing

#endif  // COATNET_TESTS_TEST_UTIL_HPP_
