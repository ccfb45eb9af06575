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

#include "coatnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "coatnet/autodiff.hpp"
#include "coatnet/ops.hpp"
#include "kernels.hpp"

namespace coatnet {

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride,
                        Padding padding) {
  if (padding == Padding::kSame) return (in + stride - 1) / stride;
  if (in < kernel) {
    throw ShapeError("valid convolution needs input extent >= kernel");
  }
  return (in - kernel) / stride + 1;
}

int64_t same_pad_before(int64_t in, int64_t kernel, int64_t stride) {
  const int64_t out = (in + stride - 1) / stride;
  const int64_t total = std::max<int64_t>((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

const char* to_string(NormKind kind) {
  return kind == NormKind::kBatch ? "batch" : "layer";
}

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "batch") return NormKind::kBatch;
  if (s == "layer") return NormKind::kLayer;
  throw ConfigError("unknown norm kind '" + s + "'");
}

namespace {

struct ConvGeometry {
  int64_t n, h, w, cin, ho, wo, cout, kh, kw, stride, groups, pad_top, pad_left;
  int64_t cin_g() const { return cin / groups; }
  int64_t cout_g() const { return cout / groups; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const ConvParams<T>& p) {
  if (x.rank() != 4) {
    throw ShapeError("conv2d expects [N,H,W,C], got " + shape_str(x.shape()));
  }
  if (p.kernel.rank() != 4) throw ShapeError("conv2d kernel must be rank 4");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cin = x.dim(3);
  g.kh = p.kernel.dim(0);
  g.kw = p.kernel.dim(1);
  g.cout = p.kernel.dim(3);
  g.stride = p.stride;
  g.groups = p.groups;
  if (g.stride < 1 || g.groups < 1) throw ConfigError("bad conv stride/groups");
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ConfigError("groups must divide c_in and c_out");
  }
  if (p.kernel.dim(2) != g.cin_g()) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                     ", kernel " + shape_str(p.kernel.shape()));
  }
  if (p.bias.defined() && p.bias.numel() != g.cout) {
    throw ShapeError("conv2d bias size mismatch");
  }
  g.ho = conv_out_extent(g.h, g.kh, g.stride, p.padding);
  g.wo = conv_out_extent(g.w, g.kw, g.stride, p.padding);
  if (p.padding == Padding::kSame) {
    g.pad_top = same_pad_before(g.h, g.kh, g.stride);
    g.pad_left = same_pad_before(g.w, g.kw, g.stride);
  }
  return g;
}

// Patch matrix [ho*wo, kh*kw*cin] of one image (zero outside the input).
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const int64_t row = g.kh * g.kw * g.cin;
  for (int64_t oy = 0; oy < g.ho; ++oy) {
    for (int64_t ox = 0; ox < g.wo; ++ox) {
      T* dst = col + (oy * g.wo + ox) * row;
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride + ky - g.pad_top;
        for (int64_t kx = 0; kx < g.kw; ++kx) {
          const int64_t ix = ox * g.stride + kx - g.pad_left;
          T* d = dst + (ky * g.kw + kx) * g.cin;
          if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
            std::fill(d, d + g.cin, T(0));
          } else {
            const T* s = x + (iy * g.w + ix) * g.cin;
            std::copy(s, s + g.cin, d);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* x) {
  const int64_t row = g.kh * g.kw * g.cin;
  for (int64_t oy = 0; oy < g.ho; ++oy) {
    for (int64_t ox = 0; ox < g.wo; ++ox) {
      const T* src = col + (oy * g.wo + ox) * row;
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride + ky - g.pad_top;
        if (iy < 0 || iy >= g.h) continue;
        for (int64_t kx = 0; kx < g.kw; ++kx) {
          const int64_t ix = ox * g.stride + kx - g.pad_left;
          if (ix < 0 || ix >= g.w) continue;
          const T* s = src + (ky * g.kw + kx) * g.cin;
          T* d = x + (iy * g.w + ix) * g.cin;
          for (int64_t c = 0; c < g.cin; ++c) d[c] += s[c];
        }
      }
    }
  }
}

enum class ConvPath { kPointwise, kDepthwise, kIm2col, kGrouped };

ConvPath choose_path(const ConvGeometry& g) {
  if (g.groups == 1 && g.kh == 1 && g.kw == 1 && g.pad_top == 0 &&
      g.pad_left == 0) {
    return ConvPath::kPointwise;
  }
  if (g.groups == g.cin && g.groups == g.cout) return ConvPath::kDepthwise;
  if (g.groups == 1) return ConvPath::kIm2col;
  return ConvPath::kGrouped;
}

// Visits every (output position, kernel tap, input position) triple of a
// grouped convolution. Used by the depthwise and generic grouped paths.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  for (int64_t b = 0; b < g.n; ++b) {
    for (int64_t oy = 0; oy < g.ho; ++oy) {
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride + ky - g.pad_top;
        if (iy < 0 || iy >= g.h) continue;
        for (int64_t ox = 0; ox < g.wo; ++ox) {
          for (int64_t kx = 0; kx < g.kw; ++kx) {
            const int64_t ix = ox * g.stride + kx - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const int64_t out_pos = ((b * g.ho + oy) * g.wo + ox) * g.cout;
            const int64_t in_pos = ((b * g.h + iy) * g.w + ix) * g.cin;
            const int64_t tap = (ky * g.kw + kx) * g.cin_g() * g.cout;
            fn(out_pos, in_pos, tap);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  const ConvGeometry g = conv_geometry(x, p);
  const ConvPath path = choose_path(g);
  const int64_t positions = g.n * g.ho * g.wo;
  std::vector<T> out(positions * g.cout, T(0));
  const T* px = x.ptr();
  const T* pk = p.kernel.ptr();

  switch (path) {
    case ConvPath::kPointwise: {
      if (g.stride == 1) {
        kernels::gemm(false, false, positions, g.cout, g.cin, px, pk,
                      out.data(), false);
      } else {
        std::vector<T> sub(positions * g.cin);
        for (int64_t b = 0; b < g.n; ++b)
          for (int64_t oy = 0; oy < g.ho; ++oy)
            for (int64_t ox = 0; ox < g.wo; ++ox) {
              const T* s =
                  px + ((b * g.h + oy * g.stride) * g.w + ox * g.stride) * g.cin;
              std::copy(s, s + g.cin,
                        sub.data() + ((b * g.ho + oy) * g.wo + ox) * g.cin);
            }
        kernels::gemm(false, false, positions, g.cout, g.cin, sub.data(), pk,
                      out.data(), false);
      }
      break;
    }
    case ConvPath::kDepthwise: {
      const int64_t c = g.cout;
      for_each_tap(g, [&](int64_t o, int64_t i, int64_t tap) {
        T* dst = out.data() + o;
        const T* src = px + i;
        const T* k = pk + tap;
        for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch] * k[ch];
      });
      break;
    }
    case ConvPath::kIm2col: {
      const int64_t row = g.kh * g.kw * g.cin;
      std::vector<T> col(g.ho * g.wo * row);
      for (int64_t b = 0; b < g.n; ++b) {
        im2col(g, px + b * g.h * g.w * g.cin, col.data());
        kernels::gemm(false, false, g.ho * g.wo, g.cout, row, col.data(), pk,
                      out.data() + b * g.ho * g.wo * g.cout, false);
      }
      break;
    }
    case ConvPath::kGrouped: {
      const int64_t cin_g = g.cin_g();
      const int64_t cout_g = g.cout_g();
      for_each_tap(g, [&](int64_t o, int64_t i, int64_t tap) {
        for (int64_t grp = 0; grp < g.groups; ++grp) {
          for (int64_t ci = 0; ci < cin_g; ++ci) {
            const T xv = px[i + grp * cin_g + ci];
            const T* k = pk + tap + ci * g.cout + grp * cout_g;
            T* dst = out.data() + o + grp * cout_g;
            for (int64_t co = 0; co < cout_g; ++co) dst[co] += xv * k[co];
          }
        }
      });
      break;
    }
  }
  if (p.bias.defined()) {
    const T* pb = p.bias.ptr();
    for (int64_t pos = 0; pos < positions; ++pos) {
      T* dst = out.data() + pos * g.cout;
      for (int64_t c = 0; c < g.cout; ++c) dst[c] += pb[c];
    }
  }
  MacCounter::add(positions * g.kh * g.kw * g.cin_g() * g.cout);

  Tensor<T> result({g.n, g.ho, g.wo, g.cout}, std::move(out));
  if (!autodiff::should_record<T>({&x, &p.kernel, &p.bias})) return result;

  autodiff::attach<T>(result, [x, kernel = p.kernel, bias = p.bias, g, path](
                                  std::span<const T> go, GradBuffers<T>& gb) {
    const int64_t positions = g.n * g.ho * g.wo;
    T* gx = x.node() ? gb.get(x.node().get()).data() : nullptr;
    T* gk = kernel.node() ? gb.get(kernel.node().get()).data() : nullptr;
    if (bias.defined() && bias.node()) {
      auto gbias = gb.get(bias.node().get());
      for (int64_t pos = 0; pos < positions; ++pos)
        for (int64_t c = 0; c < g.cout; ++c) gbias[c] += go[pos * g.cout + c];
    }
    const T* px = x.ptr();
    const T* pk = kernel.ptr();
    switch (path) {
      case ConvPath::kPointwise: {
        if (g.stride == 1) {
          if (gx) {
            kernels::gemm(false, true, positions, g.cin, g.cout, go.data(), pk,
                          gx, true);
          }
          if (gk) {
            kernels::gemm(true, false, g.cin, g.cout, positions, px, go.data(),
                          gk, true);
          }
        } else {
          std::vector<T> sub(positions * g.cin);
          auto src_offset = [&](int64_t b, int64_t oy, int64_t ox) {
            return ((b * g.h + oy * g.stride) * g.w + ox * g.stride) * g.cin;
          };
          for (int64_t b = 0; b < g.n; ++b)
            for (int64_t oy = 0; oy < g.ho; ++oy)
              for (int64_t ox = 0; ox < g.wo; ++ox) {
                const T* s = px + src_offset(b, oy, ox);
                std::copy(s, s + g.cin,
                          sub.data() + ((b * g.ho + oy) * g.wo + ox) * g.cin);
              }
          if (gk) {
            kernels::gemm(true, false, g.cin, g.cout, positions, sub.data(),
                          go.data(), gk, true);
          }
          if (gx) {
            kernels::gemm(false, true, positions, g.cin, g.cout, go.data(), pk,
                          sub.data(), false);
            for (int64_t b = 0; b < g.n; ++b)
              for (int64_t oy = 0; oy < g.ho; ++oy)
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                  const T* s =
                      sub.data() + ((b * g.ho + oy) * g.wo + ox) * g.cin;
                  T* d = gx + src_offset(b, oy, ox);
                  for (int64_t c = 0; c < g.cin; ++c) d[c] += s[c];
                }
          }
        }
        break;
      }
      case ConvPath::kDepthwise: {
        const int64_t c = g.cout;
        for_each_tap(g, [&](int64_t o, int64_t i, int64_t tap) {
          const T* gout = go.data() + o;
          if (gx) {
            const T* k = pk + tap;
            T* d = gx + i;
            for (int64_t ch = 0; ch < c; ++ch) d[ch] += gout[ch] * k[ch];
          }
          if (gk) {
            const T* s = px + i;
            T* d = gk + tap;
            for (int64_t ch = 0; ch < c; ++ch) d[ch] += gout[ch] * s[ch];
          }
        });
        break;
      }
      case ConvPath::kIm2col: {
        const int64_t row = g.kh * g.kw * g.cin;
        const int64_t spatial = g.ho * g.wo;
        std::vector<T> col(spatial * row);
        for (int64_t b = 0; b < g.n; ++b) {
          const T* gob = go.data() + b * spatial * g.cout;
          if (gk) {
            im2col(g, px + b * g.h * g.w * g.cin, col.data());
            kernels::gemm(true, false, row, g.cout, spatial, col.data(), gob,
                          gk, true);
          }
          if (gx) {
            kernels::gemm(false, true, spatial, row, g.cout, gob, pk,
                          col.data(), false);
            col2im_add(g, col.data(), gx + b * g.h * g.w * g.cin);
          }
        }
        break;
      }
      case ConvPath::kGrouped: {
        const int64_t cin_g = g.cin_g();
        const int64_t cout_g = g.cout_g();
        for_each_tap(g, [&](int64_t o, int64_t i, int64_t tap) {
          for (int64_t grp = 0; grp < g.groups; ++grp) {
            const T* gout = go.data() + o + grp * cout_g;
            for (int64_t ci = 0; ci < cin_g; ++ci) {
              const int64_t xi = i + grp * cin_g + ci;
              const int64_t ko = tap + ci * g.cout + grp * cout_g;
              T acc = T(0);
              for (int64_t co = 0; co < cout_g; ++co) {
                acc += gout[co] * pk[ko + co];
                if (gk) gk[ko + co] += gout[co] * px[xi];
              }
              if (gx) gx[xi] += acc;
            }
          }
        });
        break;
      }
    }
  });
  return result;
}

template <typename T>
NormParams<T> NormParams<T>::make(NormKind kind, int64_t channels) {
  NormParams p;
  p.kind = kind;
  p.gamma = Tensor<T>::ones({channels});
  p.beta = Tensor<T>::zeros({channels});
  if (kind == NormKind::kBatch) {
    p.running_mean = Tensor<T>::zeros({channels});
    p.running_var = Tensor<T>::ones({channels});
    p.epsilon = 1e-3;
    p.momentum = 0.99;
  } else {
    p.epsilon = 1e-5;
    p.momentum = 0.0;
  }
  return p;
}

namespace {

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, NormParams<T>& p, bool training) {
  const int64_t c = x.dim(-1);
  const int64_t rows = x.numel() / c;
  const T* px = x.ptr();
  std::vector<T> mean(c, T(0));
  std::vector<T> inv_std(c);
  if (training) {
    // Two-pass statistics in double for stability at 32-bit.
    std::vector<double> m(c, 0.0), v(c, 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t k = 0; k < c; ++k) m[k] += px[r * c + k];
    for (int64_t k = 0; k < c; ++k) m[k] /= static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t k = 0; k < c; ++k) {
        const double d = px[r * c + k] - m[k];
        v[k] += d * d;
      }
    auto rm = p.running_mean.mutable_data();
    auto rv = p.running_var.mutable_data();
    for (int64_t k = 0; k < c; ++k) {
      v[k] /= static_cast<double>(rows);
      mean[k] = static_cast<T>(m[k]);
      inv_std[k] = static_cast<T>(1.0 / std::sqrt(v[k] + p.epsilon));
      rm[k] = static_cast<T>(p.momentum * rm[k] + (1.0 - p.momentum) * m[k]);
      rv[k] = static_cast<T>(p.momentum * rv[k] + (1.0 - p.momentum) * v[k]);
    }
  } else {
    const T* rm = p.running_mean.ptr();
    const T* rv = p.running_var.ptr();
    for (int64_t k = 0; k < c; ++k) {
      mean[k] = rm[k];
      inv_std[k] = static_cast<T>(1.0 / std::sqrt(rv[k] + p.epsilon));
    }
  }
  const T* gamma = p.gamma.ptr();
  const T* beta = p.beta.ptr();
  std::vector<T> xhat(x.numel());
  std::vector<T> out(x.numel());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t k = 0; k < c; ++k) {
      const int64_t i = r * c + k;
      xhat[i] = (px[i] - mean[k]) * inv_std[k];
      out[i] = xhat[i] * gamma[k] + beta[k];
    }
  Tensor<T> result(x.shape(), std::move(out));
  if (!autodiff::should_record<T>({&x, &p.gamma, &p.beta})) return result;

  autodiff::attach<T>(
      result, [x_node = x.node(), gamma_t = p.gamma, beta_t = p.beta,
               xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c,
               training](std::span<const T> g, GradBuffers<T>& gb) {
        std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t k = 0; k < c; ++k) {
            const int64_t i = r * c + k;
            sum_g[k] += g[i];
            sum_gx[k] += g[i] * xhat[i];
          }
        if (gamma_t.node()) {
          auto gg = gb.get(gamma_t.node().get());
          for (int64_t k = 0; k < c; ++k) gg[k] += sum_gx[k];
        }
        if (beta_t.node()) {
          auto gbeta = gb.get(beta_t.node().get());
          for (int64_t k = 0; k < c; ++k) gbeta[k] += sum_g[k];
        }
        if (!x_node) return;
        auto gx = gb.get(x_node.get());
        const T* gamma = gamma_t.ptr();
        const T inv_rows = T(1) / static_cast<T>(rows);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t k = 0; k < c; ++k) {
            const int64_t i = r * c + k;
            if (training) {
              gx[i] += gamma[k] * inv_std[k] *
                       (g[i] - inv_rows * sum_g[k] -
                        xhat[i] * inv_rows * sum_gx[k]);
            } else {
              gx[i] += g[i] * gamma[k] * inv_std[k];
            }
          }
      });
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const NormParams<T>& p) {
  const int64_t c = x.dim(-1);
  const int64_t rows = x.numel() / c;
  const T* px = x.ptr();
  const T* gamma = p.gamma.ptr();
  const T* beta = p.beta.ptr();
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  std::vector<T> out(x.numel());
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * c;
    double m = 0.0;
    for (int64_t k = 0; k < c; ++k) m += row[k];
    m /= static_cast<double>(c);
    double v = 0.0;
    for (int64_t k = 0; k < c; ++k) v += (row[k] - m) * (row[k] - m);
    v /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(v + p.epsilon);
    inv_std[r] = static_cast<T>(is);
    for (int64_t k = 0; k < c; ++k) {
      const int64_t i = r * c + k;
      xhat[i] = static_cast<T>((row[k] - m) * is);
      out[i] = xhat[i] * gamma[k] + beta[k];
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (!autodiff::should_record<T>({&x, &p.gamma, &p.beta})) return result;

  autodiff::attach<T>(
      result, [x_node = x.node(), gamma_t = p.gamma, beta_t = p.beta,
               xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
               c](std::span<const T> g, GradBuffers<T>& gb) {
        const T* gamma = gamma_t.ptr();
        if (gamma_t.node() || beta_t.node()) {
          T* gg = gamma_t.node() ? gb.get(gamma_t.node().get()).data() : nullptr;
          T* gbeta = beta_t.node() ? gb.get(beta_t.node().get()).data() : nullptr;
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t k = 0; k < c; ++k) {
              const int64_t i = r * c + k;
              if (gg) gg[k] += g[i] * xhat[i];
              if (gbeta) gbeta[k] += g[i];
            }
        }
        if (!x_node) return;
        auto gx = gb.get(x_node.get());
        const T inv_c = T(1) / static_cast<T>(c);
        for (int64_t r = 0; r < rows; ++r) {
          T sum_d = T(0), sum_dx = T(0);
          for (int64_t k = 0; k < c; ++k) {
            const int64_t i = r * c + k;
            const T d = g[i] * gamma[k];
            sum_d += d;
            sum_dx += d * xhat[i];
          }
          for (int64_t k = 0; k < c; ++k) {
            const int64_t i = r * c + k;
            const T d = g[i] * gamma[k];
            gx[i] += inv_std[r] * (d - inv_c * sum_d - xhat[i] * inv_c * sum_dx);
          }
        }
      });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> norm(const Tensor<T>& x, NormParams<T>& p, bool training) {
  if (p.gamma.numel() != x.dim(-1) || p.beta.numel() != x.dim(-1)) {
    throw ShapeError("norm: channel count " + std::to_string(x.dim(-1)) +
                     " does not match parameters of size " +
                     std::to_string(p.gamma.numel()));
  }
  if (p.kind == NormKind::kBatch) return batch_norm(x, p, training);
  return layer_norm(x, p);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* px = x.ptr();
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = px[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (!autodiff::should_record<T>({&x})) return result;
  autodiff::attach<T>(result, [x](std::span<const T> g, GradBuffers<T>& gb) {
    auto gx = gb.get(x.node().get());
    const T* px = x.ptr();
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += static_cast<T>(g[i] * (cdf + v * pdf));
    }
  });
  return result;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* px = x.ptr();
  for (int64_t i = 0; i < x.numel(); ++i) {
    out[i] = T(1) / (T(1) + std::exp(-px[i]));
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (!autodiff::should_record<T>({&x})) return result;
  autodiff::attach<T>(result, [nx = x.node(), y = result.detach()](
                                  std::span<const T> g, GradBuffers<T>& gb) {
    auto gx = gb.get(nx.get());
    const T* py = y.ptr();
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * py[i] * (T(1) - py[i]);
    }
  });
  return result;
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("max_pool2d expects [N,H,W,C]");
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int64_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  std::vector<T> out(n * ho * wo * c);
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  const T* px = x.ptr();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox)
        for (int64_t ch = 0; ch < c; ++ch) {
          const int64_t o = ((b * ho + oy) * wo + ox) * c + ch;
          int64_t best = -1;
          for (int64_t dy = 0; dy < 2; ++dy) {
            const int64_t iy = 2 * oy + dy;
            if (iy >= h) continue;
            for (int64_t dx = 0; dx < 2; ++dx) {
              const int64_t ix = 2 * ox + dx;
              if (ix >= w) continue;
              const int64_t i = ((b * h + iy) * w + ix) * c + ch;
              if (best < 0 || px[i] > px[best]) best = i;
            }
          }
          out[o] = px[best];
          (*argmax)[o] = best;
        }
  Tensor<T> result({n, ho, wo, c}, std::move(out));
  if (!autodiff::should_record<T>({&x})) return result;
  autodiff::attach<T>(result, [nx = x.node(), argmax](std::span<const T> g,
                                                      GradBuffers<T>& gb) {
    auto gx = gb.get(nx.get());
    for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
  });
  return result;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects [N,H,W,C]");
  const int64_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  std::vector<T> out(n * c, T(0));
  const T* px = x.ptr();
  for (int64_t b = 0; b < n; ++b) {
    T* dst = out.data() + b * c;
    for (int64_t p = 0; p < hw; ++p) {
      const T* src = px + (b * hw + p) * c;
      for (int64_t k = 0; k < c; ++k) dst[k] += src[k];
    }
    for (int64_t k = 0; k < c; ++k) dst[k] /= static_cast<T>(hw);
  }
  Tensor<T> result({n, c}, std::move(out));
  if (!autodiff::should_record<T>({&x})) return result;
  autodiff::attach<T>(result, [nx = x.node(), n, hw, c](std::span<const T> g,
                                                        GradBuffers<T>& gb) {
    auto gx = gb.get(nx.get());
    const T inv = T(1) / static_cast<T>(hw);
    for (int64_t b = 0; b < n; ++b)
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t k = 0; k < c; ++k) {
          gx[(b * hw + p) * c + k] += g[b * c + k] * inv;
        }
  });
  return result;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  }
  const int64_t rows = x.numel() / x.dim(-1);
  Tensor<T> flat = x.rank() == 2 ? x : reshape(x, {rows, x.dim(-1)});
  Tensor<T> y = matmul(flat, w);
  if (b.defined()) y = add(y, b);
  if (x.rank() == 2) return y;
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  return reshape(y, out_shape);
}

template <typename T>
Tensor<T> squeeze_excite(const Tensor<T>& x, const SqueezeExciteParams<T>& p) {
  const int64_t c = x.dim(-1);
  if (p.w1.dim(0) != c || p.w2.dim(1) != c) {
    throw ShapeError("squeeze_excite: weights do not match " +
                     shape_str(x.shape()));
  }
  Tensor<T> s = global_avg_pool(x);
  s = gelu(linear(s, p.w1, p.b1));
  s = sigmoid(linear(s, p.w2, p.b2));
  return mul(x, reshape(s, {x.dim(0), 1, 1, c}));
}

#define COATNET_INSTANTIATE_NN(T)                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);       \
  template struct NormParams<T>;                                           \
  template Tensor<T> norm(const Tensor<T>&, NormParams<T>&, bool);         \
  template Tensor<T> gelu(const Tensor<T>&);                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                            \
  template Tensor<T> max_pool2d(const Tensor<T>&);                         \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&,            \
                            const Tensor<T>&);                             \
  template Tensor<T> squeeze_excite(const Tensor<T>&,                      \
                                    const SqueezeExciteParams<T>&);

COATNET_INSTANTIATE_NN(float)
COATNET_INSTANTIATE_NN(double)

#undef COATNET_INSTANTIATE_NN

}  // namespace coatnet
