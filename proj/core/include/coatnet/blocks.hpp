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

#ifndef COATNET_BLOCKS_HPP_
#define COATNET_BLOCKS_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "coatnet/config.hpp"
#include "coatnet/nn.hpp"
#include "coatnet/relative_attention.hpp"
#include "coatnet/tensor.hpp"

namespace coatnet {

// What a named tensor is, which decides optimizer treatment and whether it
// counts as a parameter.
enum class ParamRole {
  kWeight,      // conv kernels, projection matrices; weight-decayed
  kBias,        // additive biases
  kNormAffine,  // gamma / beta
  kRelBias,     // relative bias tables
  kBuffer,      // norm running statistics; not trainable, not counted
};

const char* to_string(ParamRole role);
inline bool is_trainable(ParamRole r) { return r != ParamRole::kBuffer; }
inline bool is_decayed(ParamRole r) { return r == ParamRole::kWeight; }

// Shape and initializer of one named tensor. `scale` is the stddev for
// truncated-normal init and the value for constant init.
struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::kWeight;
  Init init = Init::kZeros;
  double scale = 0.0;
};

// Called once per tensor a block owns. The visitor may read, replace or
// allocate `t` (it is undefined in a freshly default-constructed block).
template <typename T>
using ParamVisitor = std::function<void(const ParamSpec&, Tensor<T>& t)>;

// Truncated-normal stddev for linear and attention projections.
inline constexpr double kProjInitStddev = 0.02;

// ---------------------------------------------------------------------------
// Stochastic depth

// Training: each sample keeps `residual` with probability 1 - rate (scaled
// by 1 / (1 - rate)) or drops it. Eval: identity + residual.
template <typename T>
Tensor<T> stochastic_depth(const Tensor<T>& identity, const Tensor<T>& residual,
                           double rate, bool training, std::mt19937_64& rng);

// Per-forward block runtime: mode plus the stochastic-depth stream.
struct BlockContext {
  bool training = false;
  double drop_rate = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training && drop_rate > 0
};

// ---------------------------------------------------------------------------
// Residual 3x3 conv block: x + Conv3x3(GELU(Norm(x))). With stride 2 the
// identity is Proj(Pool(x)) and the conv is strided.

struct ConvBlockCfg {
  int64_t d_in = 0;
  int64_t d_out = 0;
  int64_t stride = 1;
  NormKind norm_kind = NormKind::kBatch;
};

template <typename T>
struct ConvBlockWeights {
  NormParams<T> norm;
  ConvParams<T> conv;
  ConvParams<T> proj;  // kernel undefined when the identity is x itself
};

template <typename T>
void visit(const ConvBlockCfg& cfg, ConvBlockWeights<T>& w,
           const std::string& prefix, const ParamVisitor<T>& fn);

template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const ConvBlockCfg& cfg,
                     ConvBlockWeights<T>& w, const BlockContext& ctx);

// ---------------------------------------------------------------------------
// MBConv: norm -> 1x1 expand (4 d_in) -> GELU -> depthwise 3x3 -> GELU -> SE
// -> 1x1 project, added to the identity branch.

struct MBConvCfg {
  int64_t d_in = 0;
  int64_t d_out = 0;
  int64_t stride = 1;
  DownsampleVariant downsample_variant = DownsampleVariant::kProjPool;
  NormKind norm_kind = NormKind::kBatch;

  int64_t hidden() const { return kMBConvExpansion * d_in; }
  int64_t squeeze() const { return hidden() / kSqueezeDivisor; }
};

template <typename T>
struct MBConvWeights {
  NormParams<T> norm;
  ConvParams<T> proj;    // identity-branch projection, optional
  ConvParams<T> expand;  // 1x1, d_in -> hidden
  ConvParams<T> dw;      // 3x3 depthwise
  SqueezeExciteParams<T> se;
  ConvParams<T> project;  // 1x1, hidden -> d_out
};

template <typename T>
void visit(const MBConvCfg& cfg, MBConvWeights<T>& w,
           const std::string& prefix, const ParamVisitor<T>& fn);

template <typename T>
Tensor<T> mbconv(const Tensor<T>& x, const MBConvCfg& cfg, MBConvWeights<T>& w,
                 const BlockContext& ctx);

// ---------------------------------------------------------------------------
// Transformer block with relative attention:
//   x <- Proj(Pool(x)) + Attn(Pool(Norm(x)))   (stride 2; x + Attn(Norm(x)) at
//                                               stride 1)
//   x <- x + W2 GELU(W1 Norm(x) + b1) + b2

struct TfmCfg {
  int64_t d_in = 0;
  int64_t d_out = 0;
  int64_t stride = 1;
  int64_t head_dim = 32;
  AttnMode attn_mode = AttnMode::kPre;
  // Grid the bias table is built for (post-pool extent).
  int64_t grid_h = 1;
  int64_t grid_w = 1;

  int64_t heads() const { return d_out / head_dim; }
  int64_t ffn_hidden() const { return kFfnExpansion * d_out; }
};

template <typename T>
struct TfmWeights {
  NormParams<T> norm1;
  ConvParams<T> proj;
  AttnParams<T> attn;
  RelBiasTable<T> bias;  // table undefined when attn_mode is none
  NormParams<T> norm2;
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
void visit(const TfmCfg& cfg, TfmWeights<T>& w, const std::string& prefix,
           const ParamVisitor<T>& fn);

// `gathered_bias`, when given, replaces the gather from w.bias (used for the
// eval-mode cache).
template <typename T>
Tensor<T> tfm_block(const Tensor<T>& x, const TfmCfg& cfg, TfmWeights<T>& w,
                    const BlockContext& ctx,
                    const Tensor<T>* gathered_bias = nullptr);

// Norm visitor shared by blocks and the model head.
template <typename T>
void visit_norm(NormKind kind, int64_t channels, NormParams<T>& p,
                const std::string& prefix, const ParamVisitor<T>& fn);

// Visits a conv kernel [k, k, c_in/groups, c_out] with truncated He-normal
// init, plus an optional zero bias.
template <typename T>
void visit_conv(int64_t k, int64_t c_in, int64_t c_out, int64_t groups,
                bool with_bias, ConvParams<T>& p, const std::string& prefix,
                const ParamVisitor<T>& fn);

}  // namespace coatnet

#endif  // COATNET_BLOCKS_HPP_
