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

#include "coatnet/blocks.hpp"

#include <cmath>

#include "coatnet/ops.hpp"

namespace coatnet {

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::kWeight: return "weight";
    case ParamRole::kBias: return "bias";
    case ParamRole::kNormAffine: return "norm_affine";
    case ParamRole::kRelBias: return "rel_bias";
    case ParamRole::kBuffer: return "buffer";
  }
  return "?";
}

template <typename T>
Tensor<T> stochastic_depth(const Tensor<T>& identity, const Tensor<T>& residual,
                           double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("stochastic depth rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return add(identity, residual);
  const int64_t n = residual.dim(0);
  std::vector<T> keep(n);
  const T scale_kept = static_cast<T>(1.0 / (1.0 - rate));
  for (int64_t i = 0; i < n; ++i) {
    // 53 random bits -> uniform [0, 1), independent of the library's
    // distribution implementation.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    keep[i] = u < rate ? T(0) : scale_kept;
  }
  Shape mask_shape(residual.rank(), 1);
  mask_shape[0] = n;
  return add(identity, mul(residual, Tensor<T>(mask_shape, std::move(keep))));
}

namespace {

template <typename T>
Tensor<T> residual_add(const Tensor<T>& identity, const Tensor<T>& residual,
                       const BlockContext& ctx) {
  if (!ctx.training || ctx.drop_rate == 0.0) return add(identity, residual);
  if (ctx.rng == nullptr) throw ConfigError("stochastic depth needs an RNG");
  return stochastic_depth(identity, residual, ctx.drop_rate, true, *ctx.rng);
}

bool needs_proj(int64_t d_in, int64_t d_out, int64_t stride) {
  return stride != 1 || d_in != d_out;
}

void check_stride(int64_t stride) {
  if (stride != 1 && stride != 2) throw ConfigError("block stride must be 1 or 2");
}

template <typename T>
void check_channels(const Tensor<T>& x, int64_t d_in, const char* block) {
  if (x.rank() != 4 || x.dim(3) != d_in) {
    throw ShapeError(std::string(block) + " expects [N,H,W," +
                     std::to_string(d_in) + "], got " + shape_str(x.shape()));
  }
}

// Identity branch: optional pool, optional 1x1 projection.
template <typename T>
Tensor<T> shortcut(const Tensor<T>& x, int64_t stride,
                   const ConvParams<T>& proj) {
  Tensor<T> id = stride == 2 ? max_pool2d(x) : x;
  if (proj.kernel.defined()) id = conv2d(id, proj);
  return id;
}

}  // namespace

template <typename T>
void visit_norm(NormKind kind, int64_t channels, NormParams<T>& p,
                const std::string& prefix, const ParamVisitor<T>& fn) {
  p.kind = kind;
  p.epsilon = kind == NormKind::kBatch ? 1e-3 : 1e-5;
  p.momentum = kind == NormKind::kBatch ? 0.99 : 0.0;
  fn({prefix + ".gamma", {channels}, ParamRole::kNormAffine, Init::kOnes, 1.0},
     p.gamma);
  fn({prefix + ".beta", {channels}, ParamRole::kNormAffine, Init::kZeros, 0.0},
     p.beta);
  if (kind == NormKind::kBatch) {
    fn({prefix + ".moving_mean", {channels}, ParamRole::kBuffer, Init::kZeros,
        0.0},
       p.running_mean);
    fn({prefix + ".moving_var", {channels}, ParamRole::kBuffer, Init::kOnes,
        1.0},
       p.running_var);
  } else {
    p.running_mean = Tensor<T>();
    p.running_var = Tensor<T>();
  }
}

template <typename T>
void visit_conv(int64_t k, int64_t c_in, int64_t c_out, int64_t groups,
                bool with_bias, ConvParams<T>& p, const std::string& prefix,
                const ParamVisitor<T>& fn) {
  const int64_t cin_g = c_in / groups;
  const double he = std::sqrt(2.0 / static_cast<double>(k * k * cin_g));
  p.groups = groups;
  fn({prefix + ".kernel", {k, k, cin_g, c_out}, ParamRole::kWeight,
      Init::kTruncNormal, he},
     p.kernel);
  if (with_bias) {
    fn({prefix + ".bias", {c_out}, ParamRole::kBias, Init::kZeros, 0.0},
       p.bias);
  } else {
    p.bias = Tensor<T>();
  }
}

namespace {

template <typename T>
void visit_linear(int64_t d_in, int64_t d_out, Tensor<T>& w, Tensor<T>* b,
                  const std::string& prefix, const ParamVisitor<T>& fn) {
  fn({prefix + ".weight", {d_in, d_out}, ParamRole::kWeight,
      Init::kTruncNormal, kProjInitStddev},
     w);
  if (b != nullptr) {
    fn({prefix + ".bias", {d_out}, ParamRole::kBias, Init::kZeros, 0.0}, *b);
  }
}

template <typename T>
void visit_proj(int64_t d_in, int64_t d_out, int64_t stride, ConvParams<T>& p,
                const std::string& prefix, const ParamVisitor<T>& fn) {
  if (needs_proj(d_in, d_out, stride)) {
    visit_conv<T>(1, d_in, d_out, 1, true, p, prefix + ".proj", fn);
  } else {
    p = ConvParams<T>();
  }
}

}  // namespace

// --- conv block -------------------------------------------------------------

template <typename T>
void visit(const ConvBlockCfg& cfg, ConvBlockWeights<T>& w,
           const std::string& prefix, const ParamVisitor<T>& fn) {
  check_stride(cfg.stride);
  visit_norm(cfg.norm_kind, cfg.d_in, w.norm, prefix + ".norm", fn);
  visit_conv<T>(kConvKernel, cfg.d_in, cfg.d_out, 1, true, w.conv,
                prefix + ".conv", fn);
  w.conv.stride = cfg.stride;
  visit_proj(cfg.d_in, cfg.d_out, cfg.stride, w.proj, prefix, fn);
}

template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const ConvBlockCfg& cfg,
                     ConvBlockWeights<T>& w, const BlockContext& ctx) {
  check_channels(x, cfg.d_in, "conv block");
  Tensor<T> h = conv2d(gelu(norm(x, w.norm, ctx.training)), w.conv);
  return residual_add(shortcut(x, cfg.stride, w.proj), h, ctx);
}

// --- MBConv -----------------------------------------------------------------

template <typename T>
void visit(const MBConvCfg& cfg, MBConvWeights<T>& w,
           const std::string& prefix, const ParamVisitor<T>& fn) {
  check_stride(cfg.stride);
  if (cfg.hidden() % kSqueezeDivisor != 0) {
    throw ConfigError("MBConv hidden width must be divisible by 4 for SE");
  }
  const int64_t hid = cfg.hidden(), sq = cfg.squeeze();
  visit_norm(cfg.norm_kind, cfg.d_in, w.norm, prefix + ".norm", fn);
  visit_proj(cfg.d_in, cfg.d_out, cfg.stride, w.proj, prefix, fn);
  visit_conv<T>(1, cfg.d_in, hid, 1, true, w.expand, prefix + ".expand", fn);
  visit_conv<T>(kConvKernel, hid, hid, hid, true, w.dw, prefix + ".dwconv",
                fn);
  visit_linear<T>(hid, sq, w.se.w1, &w.se.b1, prefix + ".se.reduce", fn);
  visit_linear<T>(sq, hid, w.se.w2, &w.se.b2, prefix + ".se.expand", fn);
  visit_conv<T>(1, hid, cfg.d_out, 1, true, w.project, prefix + ".project",
                fn);
  const bool strided_dw =
      cfg.downsample_variant == DownsampleVariant::kStridedDwconv;
  w.expand.stride = strided_dw ? 1 : cfg.stride;
  w.dw.stride = strided_dw ? cfg.stride : 1;
}

template <typename T>
Tensor<T> mbconv(const Tensor<T>& x, const MBConvCfg& cfg, MBConvWeights<T>& w,
                 const BlockContext& ctx) {
  check_channels(x, cfg.d_in, "mbconv");
  Tensor<T> h = conv2d(norm(x, w.norm, ctx.training), w.expand);
  h = gelu(conv2d(gelu(h), w.dw));
  h = conv2d(squeeze_excite(h, w.se), w.project);
  return residual_add(shortcut(x, cfg.stride, w.proj), h, ctx);
}

// --- transformer block ------------------------------------------------------

template <typename T>
void visit(const TfmCfg& cfg, TfmWeights<T>& w, const std::string& prefix,
           const ParamVisitor<T>& fn) {
  check_stride(cfg.stride);
  if (cfg.head_dim < 1 || cfg.d_out % cfg.head_dim != 0) {
    throw ConfigError("transformer width " + std::to_string(cfg.d_out) +
                      " is not a multiple of head_dim " +
                      std::to_string(cfg.head_dim));
  }
  const int64_t d = cfg.d_out;
  visit_norm(NormKind::kLayer, cfg.d_in, w.norm1, prefix + ".norm1", fn);
  visit_proj(cfg.d_in, d, cfg.stride, w.proj, prefix, fn);
  w.attn.heads = cfg.heads();
  w.attn.head_dim = cfg.head_dim;
  visit_linear<T>(cfg.d_in, d, w.attn.wq, nullptr, prefix + ".attn.q", fn);
  visit_linear<T>(cfg.d_in, d, w.attn.wk, nullptr, prefix + ".attn.k", fn);
  visit_linear<T>(cfg.d_in, d, w.attn.wv, nullptr, prefix + ".attn.v", fn);
  visit_linear<T>(d, d, w.attn.wo, nullptr, prefix + ".attn.o", fn);
  if (cfg.attn_mode != AttnMode::kNone) {
    fn({prefix + ".attn.rel_bias",
        {cfg.heads(), 2 * cfg.grid_h - 1, 2 * cfg.grid_w - 1},
        ParamRole::kRelBias, Init::kZeros, 0.0},
       w.bias.table);
    w.bias.base_h = cfg.grid_h;
    w.bias.base_w = cfg.grid_w;
  } else {
    w.bias = RelBiasTable<T>();
  }
  visit_norm(NormKind::kLayer, d, w.norm2, prefix + ".norm2", fn);
  visit_linear<T>(d, cfg.ffn_hidden(), w.w1, &w.b1, prefix + ".ffn.fc1", fn);
  visit_linear<T>(cfg.ffn_hidden(), d, w.w2, &w.b2, prefix + ".ffn.fc2", fn);
}

template <typename T>
Tensor<T> tfm_block(const Tensor<T>& x, const TfmCfg& cfg, TfmWeights<T>& w,
                    const BlockContext& ctx, const Tensor<T>* gathered_bias) {
  check_channels(x, cfg.d_in, "transformer block");
  Tensor<T> h = norm(x, w.norm1, ctx.training);
  if (cfg.stride == 2) h = max_pool2d(h);
  Tensor<T> bias;
  if (cfg.attn_mode != AttnMode::kNone) {
    bias = gathered_bias != nullptr ? *gathered_bias
                                    : gather_bias(w.bias, h.dim(1), h.dim(2));
  }
  Tensor<T> y =
      residual_add(shortcut(x, cfg.stride, w.proj),
                   relative_mhsa(h, w.attn, bias, cfg.attn_mode), ctx);
  Tensor<T> f = norm(y, w.norm2, ctx.training);
  f = linear(gelu(linear(f, w.w1, w.b1)), w.w2, w.b2);
  return residual_add(y, f, ctx);
}

#define COATNET_INSTANTIATE_BLOCKS(T)                                         \
  template Tensor<T> stochastic_depth(const Tensor<T>&, const Tensor<T>&,     \
                                      double, bool, std::mt19937_64&);        \
  template void visit_norm(NormKind, int64_t, NormParams<T>&,                 \
                           const std::string&, const ParamVisitor<T>&);       \
  template void visit_conv(int64_t, int64_t, int64_t, int64_t, bool,          \
                           ConvParams<T>&, const std::string&,                \
                           const ParamVisitor<T>&);                           \
  template void visit(const ConvBlockCfg&, ConvBlockWeights<T>&,              \
                      const std::string&, const ParamVisitor<T>&);            \
  template void visit(const MBConvCfg&, MBConvWeights<T>&,                    \
                      const std::string&, const ParamVisitor<T>&);            \
  template void visit(const TfmCfg&, TfmWeights<T>&, const std::string&,      \
                      const ParamVisitor<T>&);                                \
  template Tensor<T> conv_block(const Tensor<T>&, const ConvBlockCfg&,        \
                                ConvBlockWeights<T>&, const BlockContext&);   \
  template Tensor<T> mbconv(const Tensor<T>&, const MBConvCfg&,               \
                            MBConvWeights<T>&, const BlockContext&);          \
  template Tensor<T> tfm_block(const Tensor<T>&, const TfmCfg&,               \
                               TfmWeights<T>&, const BlockContext&,           \
                               const Tensor<T>*);

COATNET_INSTANTIATE_BLOCKS(float)
COATNET_INSTANTIATE_BLOCKS(double)

#undef COATNET_INSTANTIATE_BLOCKS

}  // namespace coatnet
