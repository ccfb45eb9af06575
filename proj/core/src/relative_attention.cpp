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

#include "coatnet/relative_attention.hpp"

#include <cmath>

#include "coatnet/nn.hpp"
#include "coatnet/ops.hpp"

namespace coatnet {

const char* to_string(AttnMode mode) {
  switch (mode) {
    case AttnMode::kPre: return "pre";
    case AttnMode::kPost: return "post";
    case AttnMode::kNone: return "none";
  }
  return "?";
}

AttnMode attn_mode_from_string(const std::string& s) {
  if (s == "pre") return AttnMode::kPre;
  if (s == "post") return AttnMode::kPost;
  if (s == "none") return AttnMode::kNone;
  throw ConfigError("unknown attention mode '" + s + "'");
}

template <typename T>
RelBiasTable<T> init_bias_table(int64_t h, int64_t w, int64_t heads) {
  if (h < 1 || w < 1 || heads < 1) {
    throw ShapeError("bias table needs a grid and head count >= 1");
  }
  return {Tensor<T>::zeros({heads, 2 * h - 1, 2 * w - 1}), h, w};
}

std::shared_ptr<const std::vector<int64_t>> relative_bias_indices(
    int64_t h, int64_t w, int64_t heads) {
  const int64_t tokens = h * w;
  const int64_t table_w = 2 * w - 1;
  const int64_t per_head = (2 * h - 1) * table_w;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(heads * tokens * tokens);
  for (int64_t head = 0; head < heads; ++head) {
    for (int64_t qi = 0; qi < h; ++qi)
      for (int64_t qj = 0; qj < w; ++qj)
        for (int64_t ki = 0; ki < h; ++ki)
          for (int64_t kj = 0; kj < w; ++kj) {
            const int64_t row = qi - ki + h - 1;
            const int64_t col = qj - kj + w - 1;
            idx->push_back(head * per_head + row * table_w + col);
          }
  }
  return idx;
}

template <typename T>
Tensor<T> gather_bias(const RelBiasTable<T>& t, int64_t h, int64_t w) {
  if (h != t.base_h || w != t.base_w) {
    throw ResolutionError(
        "bias table built for a " + std::to_string(t.base_h) + "x" +
        std::to_string(t.base_w) + " grid applied to " + std::to_string(h) +
        "x" + std::to_string(w) + "; interpolate_bias/adapt_resolution first");
  }
  const int64_t tokens = h * w;
  return gather(t.table, relative_bias_indices(h, w, t.heads()),
                {t.heads(), tokens, tokens});
}

template <typename T>
RelBiasTable<T> interpolate_bias(const RelBiasTable<T>& t, int64_t new_h,
                                 int64_t new_w) {
  if (new_h < t.base_h || new_w < t.base_w) {
    throw UnsupportedError("bias interpolation only enlarges the grid (" +
                           std::to_string(t.base_h) + "x" +
                           std::to_string(t.base_w) + " -> " +
                           std::to_string(new_h) + "x" + std::to_string(new_w) +
                           ")");
  }
  const int64_t src_h = 2 * t.base_h - 1, src_w = 2 * t.base_w - 1;
  const int64_t dst_h = 2 * new_h - 1, dst_w = 2 * new_w - 1;
  const int64_t heads = t.heads();

  // Source coordinate of every destination row/column: integer part and
  // fractional weight towards the next sample.
  auto axis = [](int64_t src, int64_t dst) {
    std::vector<std::pair<int64_t, double>> map(dst);
    for (int64_t i = 0; i < dst; ++i) {
      if (dst == 1 || src == 1) {
        map[i] = {0, 0.0};
        continue;
      }
      // Rational form keeps the same-size case exact.
      const int64_t num = i * (src - 1);
      const int64_t lo = num / (dst - 1);
      const double frac =
          static_cast<double>(num % (dst - 1)) / static_cast<double>(dst - 1);
      map[i] = {lo, frac};
    }
    return map;
  };
  const auto rows = axis(src_h, dst_h);
  const auto cols = axis(src_w, dst_w);

  std::vector<T> out(heads * dst_h * dst_w);
  const T* src = t.table.ptr();
  for (int64_t hd = 0; hd < heads; ++hd) {
    const T* s = src + hd * src_h * src_w;
    for (int64_t r = 0; r < dst_h; ++r) {
      const auto [r0, fr] = rows[r];
      const int64_t r1 = std::min(r0 + 1, src_h - 1);
      for (int64_t c = 0; c < dst_w; ++c) {
        const auto [c0, fc] = cols[c];
        const int64_t c1 = std::min(c0 + 1, src_w - 1);
        double v;
        if (fr == 0.0 && fc == 0.0) {
          v = s[r0 * src_w + c0];
        } else {
          const double top = (1.0 - fc) * s[r0 * src_w + c0] + fc * s[r0 * src_w + c1];
          const double bot = (1.0 - fc) * s[r1 * src_w + c0] + fc * s[r1 * src_w + c1];
          v = (1.0 - fr) * top + fr * bot;
        }
        out[(hd * dst_h + r) * dst_w + c] = static_cast<T>(v);
      }
    }
  }
  return {Tensor<T>({heads, dst_h, dst_w}, std::move(out)), new_h, new_w};
}

namespace {

template <typename T>
void check_attn(const Tensor<T>& x, const AttnParams<T>& p) {
  if (x.rank() != 4) throw ShapeError("attention expects [N,H,W,D]");
  const int64_t inner = p.heads * p.head_dim;
  if (p.wq.rank() != 2 || p.wq.dim(0) != x.dim(3) || p.wq.dim(1) != inner ||
      p.wk.shape() != p.wq.shape() || p.wv.shape() != p.wq.shape() ||
      p.wo.rank() != 2 || p.wo.dim(0) != inner) {
    throw ShapeError("attention weights do not match input " +
                     shape_str(x.shape()) + " with " + std::to_string(p.heads) +
                     " heads of size " + std::to_string(p.head_dim));
  }
}

// [N, T, heads*hd] -> [N, heads, T, hd]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& t, int64_t heads, int64_t head_dim) {
  const int64_t n = t.dim(0), tokens = t.dim(1);
  return permute(reshape(t, {n, tokens, heads, head_dim}), {0, 2, 1, 3});
}

template <typename T>
Tensor<T> weights_impl(const Tensor<T>& x, const AttnParams<T>& p,
                       const Tensor<T>& bias, AttnMode mode, Tensor<T>* v_out) {
  check_attn(x, p);
  const int64_t n = x.dim(0), tokens = x.dim(1) * x.dim(2);
  if (mode != AttnMode::kNone) {
    if (!bias.defined() || bias.shape() != Shape{p.heads, tokens, tokens}) {
      throw ResolutionError("relative bias must be [" + std::to_string(p.heads) +
                            ", " + std::to_string(tokens) + ", " +
                            std::to_string(tokens) + "]");
    }
  }
  Tensor<T> flat = reshape(x, {n, tokens, x.dim(3)});
  Tensor<T> q = split_heads(linear(flat, p.wq, Tensor<T>()), p.heads, p.head_dim);
  Tensor<T> k = split_heads(linear(flat, p.wk, Tensor<T>()), p.heads, p.head_dim);
  if (v_out != nullptr) {
    *v_out = split_heads(linear(flat, p.wv, Tensor<T>()), p.heads, p.head_dim);
  }
  Tensor<T> logits = scale(matmul(q, transpose(k)),
                           static_cast<T>(1.0 / std::sqrt(double(p.head_dim))));
  switch (mode) {
    case AttnMode::kPre:
      return softmax(add(logits, bias), -1);
    case AttnMode::kPost:
      return add(softmax(logits, -1), bias);
    case AttnMode::kNone:
      return softmax(logits, -1);
  }
  throw ConfigError("unknown attention mode");
}

}  // namespace

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& x, const AttnParams<T>& p,
                            const Tensor<T>& bias, AttnMode mode) {
  return weights_impl<T>(x, p, bias, mode, nullptr);
}

template <typename T>
Tensor<T> relative_mhsa(const Tensor<T>& x, const AttnParams<T>& p,
                        const Tensor<T>& bias, AttnMode mode) {
  Tensor<T> v;
  Tensor<T> weights = weights_impl(x, p, bias, mode, &v);
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), tokens = h * w;
  Tensor<T> y = permute(matmul(weights, v), {0, 2, 1, 3});
  y = reshape(y, {n, tokens, p.heads * p.head_dim});
  y = linear(y, p.wo, Tensor<T>());
  return reshape(y, {n, h, w, p.wo.dim(1)});
}

template <typename T>
Tensor<T> relative_mhsa(const Tensor<T>& x, const AttnParams<T>& p,
                        const RelBiasTable<T>* table, AttnMode mode) {
  Tensor<T> bias;
  if (mode != AttnMode::kNone) {
    if (table == nullptr) throw ConfigError("attention mode needs a bias table");
    bias = gather_bias(*table, x.dim(1), x.dim(2));
  }
  return relative_mhsa(x, p, bias, mode);
}

template <typename T>
Tensor<T> GatheredBiasCache<T>::get(const RelBiasTable<T>& t,
                                    uint64_t version) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto key = std::make_pair(t.base_h, t.base_w);
  auto it = cache_.find(key);
  if (it != cache_.end() && it->second.first == version) {
    return it->second.second;
  }
  Tensor<T> bias = gather_bias(RelBiasTable<T>{t.table.detach(), t.base_h,
                                               t.base_w},
                               t.base_h, t.base_w);
  cache_[key] = {version, bias};
  return bias;
}

template <typename T>
void GatheredBiasCache<T>::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  cache_.clear();
}

#define COATNET_INSTANTIATE_ATTN(T)                                           \
  template RelBiasTable<T> init_bias_table<T>(int64_t, int64_t, int64_t);     \
  template Tensor<T> gather_bias(const RelBiasTable<T>&, int64_t, int64_t);   \
  template RelBiasTable<T> interpolate_bias(const RelBiasTable<T>&, int64_t,  \
                                            int64_t);                         \
  template Tensor<T> relative_mhsa(const Tensor<T>&, const AttnParams<T>&,    \
                                   const Tensor<T>&, AttnMode);               \
  template Tensor<T> relative_mhsa(const Tensor<T>&, const AttnParams<T>&,    \
                                   const RelBiasTable<T>*, AttnMode);         \
  template Tensor<T> attention_weights(const Tensor<T>&, const AttnParams<T>&,\
                                       const Tensor<T>&, AttnMode);           \
  template class GatheredBiasCache<T>;

COATNET_INSTANTIATE_ATTN(float)
COATNET_INSTANTIATE_ATTN(double)

#undef COATNET_INSTANTIATE_ATTN

}  // namespace coatnet
