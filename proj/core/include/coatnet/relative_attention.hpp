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

#ifndef COATNET_RELATIVE_ATTENTION_HPP_
#define COATNET_RELATIVE_ATTENTION_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet {

// Where the relative bias enters the attention weights.
//   kPre:  softmax(q k^T / sqrt(d) + B) v        (default)
//   kPost: (softmax(q k^T / sqrt(d)) + B) v
//   kNone: softmax(q k^T / sqrt(d)) v            (no bias table)
enum class AttnMode { kPre, kPost, kNone };

const char* to_string(AttnMode mode);
AttnMode attn_mode_from_string(const std::string& s);

// One scalar per head per 2D relative offset. For a base grid H x W the
// table is [heads, 2H - 1, 2W - 1]; offset (di, dj) = (i - i', j - j') lives
// at row di + H - 1, column dj + W - 1.
template <typename T>
struct RelBiasTable {
  Tensor<T> table;
  int64_t base_h = 0;
  int64_t base_w = 0;

  int64_t heads() const { return table.dim(0); }
};

// Zero-initialised table for an H x W grid.
template <typename T>
RelBiasTable<T> init_bias_table(int64_t h, int64_t w, int64_t heads);

// Flat gather indices into a [heads, 2H-1, 2W-1] table producing the
// [heads, H*W, H*W] bias matrix (row = query position, column = key
// position, positions in row-major order).
std::shared_ptr<const std::vector<int64_t>> relative_bias_indices(
    int64_t h, int64_t w, int64_t heads);

// Differentiable gather of the full bias matrix. Throws ResolutionError if
// the table was built for a different grid.
template <typename T>
Tensor<T> gather_bias(const RelBiasTable<T>& t, int64_t h, int64_t w);

// Bilinear (align-corners) resize of every head's table to the grid
// new_h x new_w. Exact identity when the grid is unchanged.
template <typename T>
RelBiasTable<T> interpolate_bias(const RelBiasTable<T>& t, int64_t new_h,
                                 int64_t new_w);

template <typename T>
struct AttnParams {
  int64_t heads = 1;
  int64_t head_dim = 32;
  Tensor<T> wq;  // [d_in, heads * head_dim]
  Tensor<T> wk;
  Tensor<T> wv;
  Tensor<T> wo;  // [heads * head_dim, d_out]
};

// Multi-head self-attention over the flattened H*W grid of x [N,H,W,D].
// `bias` is the gathered [heads, HW, HW] matrix; it is ignored (and may be
// undefined) in kNone mode.
template <typename T>
Tensor<T> relative_mhsa(const Tensor<T>& x, const AttnParams<T>& p,
                        const Tensor<T>& bias, AttnMode mode);

// Convenience overload gathering the bias from a table.
template <typename T>
Tensor<T> relative_mhsa(const Tensor<T>& x, const AttnParams<T>& p,
                        const RelBiasTable<T>* table, AttnMode mode);

// The [N, heads, HW, HW] aggregation weights used by relative_mhsa (after
// softmax, plus the bias in kPost mode).
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& x, const AttnParams<T>& p,
                            const Tensor<T>& bias, AttnMode mode);

// Gathered biases cached per (grid, weights version) for inference.
template <typename T>
class GatheredBiasCache {
 public:
  Tensor<T> get(const RelBiasTable<T>& t, uint64_t version);
  void clear();

 private:
  std::mutex mu_;
  std::map<std::pair<int64_t, int64_t>, std::pair<uint64_t, Tensor<T>>> cache_;
};

}  // namespace coatnet

#endif  // COATNET_RELATIVE_ATTENTION_HPP_
