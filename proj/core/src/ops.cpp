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

#include "coatnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coatnet/autodiff.hpp"
#include "kernels.hpp"

namespace coatnet {

namespace {

thread_local MacCounter* g_mac_counter = nullptr;

enum class Binary { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(Binary kind, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<T> out(shape_numel(out_shape));
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  const bool same = a.shape() == b.shape();

  auto apply = [&](auto&& f) {
    if (same) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
    } else {
      kernels::for_each_broadcast(
          out_shape, kernels::broadcast_strides(a.shape(), out_shape),
          kernels::broadcast_strides(b.shape(), out_shape),
          [&](int64_t o, int64_t ia, int64_t ib) { out[o] = f(pa[ia], pb[ib]); });
    }
  };
  switch (kind) {
    case Binary::kAdd: apply([](T x, T y) { return x + y; }); break;
    case Binary::kSub: apply([](T x, T y) { return x - y; }); break;
    case Binary::kMul: apply([](T x, T y) { return x * y; }); break;
    case Binary::kDiv: apply([](T x, T y) { return x / y; }); break;
  }

  Tensor<T> result(out_shape, std::move(out));
  if (!autodiff::should_record<T>({&a, &b})) return result;

  autodiff::attach<T>(result, [kind, a, b, out_shape, same](
                                  std::span<const T> g, GradBuffers<T>& gb) {
    const auto& na = a.node();
    const auto& nb = b.node();
    T* ga = na ? gb.get(na.get()).data() : nullptr;
    T* gbv = nb ? gb.get(nb.get()).data() : nullptr;
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    auto step = [&](int64_t o, int64_t ia, int64_t ib) {
      const T go = g[o];
      switch (kind) {
        case Binary::kAdd:
          if (ga) ga[ia] += go;
          if (gbv) gbv[ib] += go;
          break;
        case Binary::kSub:
          if (ga) ga[ia] += go;
          if (gbv) gbv[ib] -= go;
          break;
        case Binary::kMul:
          if (ga) ga[ia] += go * pb[ib];
          if (gbv) gbv[ib] += go * pa[ia];
          break;
        case Binary::kDiv:
          if (ga) ga[ia] += go / pb[ib];
          if (gbv) gbv[ib] -= go * pa[ia] / (pb[ib] * pb[ib]);
          break;
      }
    };
    if (same) {
      for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
    } else {
      kernels::for_each_broadcast(
          out_shape, kernels::broadcast_strides(a.shape(), out_shape),
          kernels::broadcast_strides(b.shape(), out_shape), step);
    }
  });
  return result;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const int64_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[rank - 1 - i] = std::max(ea, eb);
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::kAdd, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::kSub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::kMul, a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Binary::kDiv, a, b);
}

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a, const Tensor<T>& b) {
  switch (op) {
    case EwOp::kAdd: return add(a, b);
    case EwOp::kSub: return sub(a, b);
    case EwOp::kMul: return mul(a, b);
    case EwOp::kDiv: return div(a, b);
  }
  throw ConfigError("unknown elementwise op");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v += value;
  Tensor<T> result(a.shape(), std::move(out));
  if (autodiff::should_record<T>({&a})) {
    autodiff::attach<T>(result, [na = a.node()](std::span<const T> g,
                                                 GradBuffers<T>& gb) {
      auto ga = gb.get(na.get());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  Tensor<T> result(a.shape(), std::move(out));
  if (autodiff::should_record<T>({&a})) {
    autodiff::attach<T>(result, [na = a.node(), factor](std::span<const T> g,
                                                         GradBuffers<T>& gb) {
      auto ga = gb.get(na.get());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return result;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v = std::exp(v);
  Tensor<T> result(a.shape(), std::move(out));
  if (autodiff::should_record<T>({&a})) {
    autodiff::attach<T>(result, [na = a.node(), y = result.detach()](
                                    std::span<const T> g, GradBuffers<T>& gb) {
      auto ga = gb.get(na.get());
      const T* py = y.ptr();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * py[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  Tensor<T> result = Tensor<T>::scalar(acc);
  if (autodiff::should_record<T>({&a})) {
    autodiff::attach<T>(result, [na = a.node()](std::span<const T> g,
                                                 GradBuffers<T>& gb) {
      auto ga = gb.get(na.get());
      for (T& v : ga) v += g[0];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  Tensor<T> result = a.reshaped_view(shape);
  if (autodiff::should_record<T>({&a})) {
    autodiff::attach<T>(result, [na = a.node()](std::span<const T> g,
                                                 GradBuffers<T>& gb) {
      auto ga = gb.get(na.get());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int64_t>& perm) {
  const int64_t rank = a.rank();
  if (static_cast<int64_t>(perm.size()) != rank) {
    throw ShapeError("permute: rank mismatch");
  }
  std::vector<int64_t> seen(rank, 0);
  for (int64_t p : perm) {
    if (p < 0 || p >= rank || seen[p]++) throw ShapeError("permute: bad perm");
  }
  std::vector<int64_t> in_strides(rank, 1);
  for (int64_t d = rank - 2; d >= 0; --d) {
    in_strides[d] = in_strides[d + 1] * a.shape()[d + 1];
  }
  Shape out_shape(rank);
  std::vector<int64_t> src_strides(rank);
  for (int64_t d = 0; d < rank; ++d) {
    out_shape[d] = a.shape()[perm[d]];
    src_strides[d] = in_strides[perm[d]];
  }
  // Maps output position -> input position.
  auto index = std::make_shared<std::vector<int64_t>>(a.numel());
  std::vector<int64_t> zero(rank, 0);
  kernels::for_each_broadcast(
      out_shape, src_strides, zero,
      [&](int64_t o, int64_t ia, int64_t) { (*index)[o] = ia; });
  return gather(a, index, out_shape);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<int64_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return permute(a, perm);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands");
  }
  const int64_t m = a.dim(-2);
  const int64_t k = a.dim(-1);
  const int64_t n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul inner mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shape(batch_a.empty() ? Shape{1} : batch_a,
                                batch_b.empty() ? Shape{1} : batch_b);
  // Offsets (in matrices) of each operand for every output batch entry.
  auto pairs = std::make_shared<std::vector<std::pair<int64_t, int64_t>>>();
  pairs->reserve(shape_numel(batch));
  kernels::for_each_broadcast(
      batch, kernels::broadcast_strides(batch_a.empty() ? Shape{1} : batch_a, batch),
      kernels::broadcast_strides(batch_b.empty() ? Shape{1} : batch_b, batch),
      [&](int64_t, int64_t ia, int64_t ib) { pairs->emplace_back(ia, ib); });

  Shape out_shape = (batch_a.empty() && batch_b.empty()) ? Shape{} : batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(shape_numel(out_shape), T(0));
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  for (std::size_t i = 0; i < pairs->size(); ++i) {
    const auto [ia, ib] = (*pairs)[i];
    kernels::gemm(false, false, m, n, k, pa + ia * m * k, pb + ib * k * n,
                  out.data() + i * m * n, true);
  }
  MacCounter::add(static_cast<int64_t>(pairs->size()) * m * n * k);

  Tensor<T> result(out_shape, std::move(out));
  if (!autodiff::should_record<T>({&a, &b})) return result;
  autodiff::attach<T>(result, [a, b, pairs, m, n, k](std::span<const T> g,
                                                     GradBuffers<T>& gb) {
    const auto& na = a.node();
    const auto& nb = b.node();
    T* ga = na ? gb.get(na.get()).data() : nullptr;
    T* gbv = nb ? gb.get(nb.get()).data() : nullptr;
    for (std::size_t i = 0; i < pairs->size(); ++i) {
      const auto [ia, ib] = (*pairs)[i];
      const T* go = g.data() + i * m * n;
      if (ga) {
        kernels::gemm(false, true, m, k, n, go, b.ptr() + ib * k * n,
                      ga + ia * m * k, true);
      }
      if (gbv) {
        kernels::gemm(true, false, k, n, m, a.ptr() + ia * m * k, go,
                      gbv + ib * k * n, true);
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: bad axis");
  int64_t outer = 1;
  int64_t inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (int64_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  const int64_t len = x.shape()[axis];
  std::vector<T> out(x.numel());
  const T* px = x.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      T mx = px[base];
      for (int64_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      T total = T(0);
      for (int64_t j = 0; j < len; ++j) {
        const T e = std::exp(px[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (int64_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (!autodiff::should_record<T>({&x})) return result;
  autodiff::attach<T>(result, [nx = x.node(), y = result.detach(), outer, inner,
                               len](std::span<const T> g, GradBuffers<T>& gb) {
    auto gx = gb.get(nx.get());
    const T* py = y.ptr();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        T dot = T(0);
        for (int64_t j = 0; j < len; ++j) {
          dot += g[base + j * inner] * py[base + j * inner];
        }
        for (int64_t j = 0; j < len; ++j) {
          const int64_t p = base + j * inner;
          gx[p] += py[p] * (g[p] - dot);
        }
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& src,
                 std::shared_ptr<const std::vector<int64_t>> indices,
                 const Shape& out_shape) {
  check_shape(out_shape);
  if (static_cast<int64_t>(indices->size()) != shape_numel(out_shape)) {
    throw ShapeError("gather: index count does not match output shape");
  }
  std::vector<T> out(indices->size());
  const T* ps = src.ptr();
  const int64_t n = src.numel();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int64_t j = (*indices)[i];
    if (j < 0 || j >= n) throw ShapeError("gather: index out of range");
    out[i] = ps[j];
  }
  Tensor<T> result(out_shape, std::move(out));
  if (!autodiff::should_record<T>({&src})) return result;
  autodiff::attach<T>(result, [ns = src.node(), indices](std::span<const T> g,
                                                         GradBuffers<T>& gb) {
    auto gs = gb.get(ns.get());
    for (std::size_t i = 0; i < g.size(); ++i) gs[(*indices)[i]] += g[i];
  });
  return result;
}

MacCounter::MacCounter() : parent_(g_mac_counter) { g_mac_counter = this; }

MacCounter::~MacCounter() { g_mac_counter = parent_; }

void MacCounter::add(int64_t macs) {
  for (MacCounter* c = g_mac_counter; c != nullptr; c = c->parent_) {
    c->count_ += macs;
  }
}

#define COATNET_INSTANTIATE_OPS(T)                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> elementwise(EwOp, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                              \
  template Tensor<T> exp(const Tensor<T>&);                                   \
  template Tensor<T> sum(const Tensor<T>&);                                   \
  template Tensor<T> mean(const Tensor<T>&);                                  \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                 \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int64_t>&);  \
  template Tensor<T> transpose(const Tensor<T>&);                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> softmax(const Tensor<T>&, int64_t);                      \
  template Tensor<T> gather(const Tensor<T>&,                                 \
                            std::shared_ptr<const std::vector<int64_t>>,      \
                            const Shape&);

COATNET_INSTANTIATE_OPS(float)
COATNET_INSTANTIATE_OPS(double)

#undef COATNET_INSTANTIATE_OPS

}  // namespace coatnet
