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

#ifndef COATNET_CONFIG_HPP_
#define COATNET_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "coatnet/nn.hpp"
#include "coatnet/relative_attention.hpp"

namespace coatnet {

// Block family of a stage. kConv is a plain 3x3 convolution: the stem, or a
// residual 3x3 block when it appears after the stem.
enum class StageKind { kConv, kMBConv, kTfm };

// Where an MBConv block halves the resolution: in the first 1x1 convolution
// (kProjPool) or in the depthwise convolution (kStridedDwconv).
enum class DownsampleVariant { kProjPool, kStridedDwconv };

const char* to_string(StageKind kind);
StageKind stage_kind_from_string(const std::string& s);
const char* to_string(DownsampleVariant v);
DownsampleVariant downsample_variant_from_string(const std::string& s);

inline constexpr int64_t kMBConvExpansion = 4;
inline constexpr int64_t kSqueezeDivisor = 4;  // SE ratio 0.25
inline constexpr int64_t kFfnExpansion = 4;
inline constexpr int64_t kConvKernel = 3;

struct StageSpec {
  StageKind kind = StageKind::kMBConv;
  int64_t depth = 1;
  int64_t width = 64;
  // First block halves the grid. Cleared for the second half of a mixed
  // stage (CoAtNet-6/7 S3) and for the single stage of a patchify model.
  bool downsample = true;

  bool operator==(const StageSpec&) const = default;
};

struct ModelConfig {
  std::string name = "custom";
  StageSpec stem{StageKind::kConv, 2, 64, true};
  // 0: 3x3 stride-2 convolution stem. k > 0: one k x k stride-k patchify
  // convolution (the ViT_rel layout).
  int64_t stem_patch = 0;
  std::vector<StageSpec> stages;
  int64_t num_classes = 1000;
  int64_t head_dim = 32;
  // Resolution the relative bias tables are built for.
  int64_t image_size = 224;
  NormKind norm_kind = NormKind::kBatch;  // conv and MBConv blocks
  AttnMode attn_mode = AttnMode::kPre;
  DownsampleVariant downsample_variant = DownsampleVariant::kProjPool;
  double stochastic_depth_rate = 0.0;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError naming the violated constraint.
void validate(const ModelConfig& cfg);

// coatnet-0 .. coatnet-7, tiny, layout:ViT_rel, layout:CCCC, layout:CCCT,
// layout:CCTT, layout:CTTT.
ModelConfig family_config(const std::string& name);
std::vector<std::string> family_names();
std::vector<std::string> layout_names();

// Product of all spatial reductions (stem included).
int64_t total_stride(const ModelConfig& cfg);

// Spatial extent after the stem and after every stage for a square input.
struct StageGrids {
  int64_t stem = 0;
  std::vector<int64_t> stages;
};
StageGrids stage_grids(const ModelConfig& cfg, int64_t resolution);

// JSON document, keys as in ModelConfig. Unknown keys are rejected.
std::string to_json(const ModelConfig& cfg, int indent = 2);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace coatnet

#endif  // COATNET_CONFIG_HPP_
