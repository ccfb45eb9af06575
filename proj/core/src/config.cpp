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

#include "coatnet/config.hpp"

#include <set>

#include "json.hpp"
#include "json_util.hpp"

namespace coatnet {

using nlohmann::json;

const char* to_string(StageKind kind) {
  switch (kind) {
    case StageKind::kConv: return "conv";
    case StageKind::kMBConv: return "mbconv";
    case StageKind::kTfm: return "tfm_rel";
  }
  return "?";
}

StageKind stage_kind_from_string(const std::string& s) {
  if (s == "conv") return StageKind::kConv;
  if (s == "mbconv") return StageKind::kMBConv;
  if (s == "tfm_rel" || s == "tfm") return StageKind::kTfm;
  throw ConfigError("unknown stage kind '" + s + "'");
}

const char* to_string(DownsampleVariant v) {
  return v == DownsampleVariant::kProjPool ? "proj_pool" : "strided_dwconv";
}

DownsampleVariant downsample_variant_from_string(const std::string& s) {
  if (s == "proj_pool") return DownsampleVariant::kProjPool;
  if (s == "strided_dwconv") return DownsampleVariant::kStridedDwconv;
  throw ConfigError("unknown downsample variant '" + s + "'");
}

void validate(const ModelConfig& cfg) {
  auto fail = [&](const std::string& what) {
    throw ConfigError("model '" + cfg.name + "': " + what);
  };
  if (cfg.stem.kind != StageKind::kConv) fail("S0 must be a conv stem");
  if (cfg.stem.depth < 1 || cfg.stem.width < 1) fail("stem needs L, D >= 1");
  if (cfg.stem_patch < 0) fail("stem_patch must be >= 0");
  if (cfg.stages.empty()) fail("at least one stage is required");
  if (cfg.num_classes < 2) fail("num_classes must be >= 2");
  if (cfg.head_dim < 1) fail("head_dim must be >= 1");
  if (cfg.stochastic_depth_rate < 0.0 || cfg.stochastic_depth_rate >= 1.0) {
    fail("stochastic_depth_rate must lie in [0, 1)");
  }
  bool seen_tfm = false;
  int64_t prev_width = 0;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageSpec& s = cfg.stages[i];
    const std::string label = "stage S" + std::to_string(i + 1);
    if (s.depth < 1 || s.width < 1) fail(label + " needs L, D >= 1");
    if (s.kind == StageKind::kTfm) {
      seen_tfm = true;
      if (s.width < cfg.head_dim || s.width % cfg.head_dim != 0) {
        fail(label + " width " + std::to_string(s.width) +
             " is not a multiple of head_dim " + std::to_string(cfg.head_dim));
      }
    } else if (seen_tfm) {
      fail("convolution stages must appear before transformer stages (" +
           label + " is " + to_string(s.kind) + " after a tfm_rel stage)");
    }
    if (s.width < prev_width) fail("stage widths must be non-decreasing");
    prev_width = s.width;
    const int64_t d_in = i == 0 ? cfg.stem.width : cfg.stages[i - 1].width;
    if (s.kind == StageKind::kMBConv &&
        ((kMBConvExpansion * d_in) % kSqueezeDivisor != 0 ||
         (kMBConvExpansion * s.width) % kSqueezeDivisor != 0)) {
      fail(label + ": expanded width must be divisible by 4 for SE");
    }
  }
  if (cfg.stem_patch == 0) {
    if (cfg.stages.front().kind == StageKind::kTfm) {
      fail("S1 cannot be a transformer stage; the grid is too large for "
           "global attention");
    }
  } else if (cfg.stem.depth != 1) {
    fail("a patchify stem has exactly one convolution");
  }
  if (cfg.stem.width > cfg.stages.front().width) {
    fail("stem width must not exceed the S1 width");
  }
  const int64_t stride = total_stride(cfg);
  if (cfg.image_size < stride || cfg.image_size % stride != 0) {
    fail("image_size " + std::to_string(cfg.image_size) +
         " must be a positive multiple of the total stride " +
         std::to_string(stride));
  }
}

int64_t total_stride(const ModelConfig& cfg) {
  int64_t stride = cfg.stem_patch > 0 ? cfg.stem_patch : 2;
  for (const auto& s : cfg.stages) {
    if (s.downsample) stride *= 2;
  }
  return stride;
}

StageGrids stage_grids(const ModelConfig& cfg, int64_t resolution) {
  StageGrids g;
  if (cfg.stem_patch > 0) {
    g.stem = resolution / cfg.stem_patch;
  } else {
    g.stem = (resolution + 1) / 2;
  }
  int64_t cur = g.stem;
  for (const auto& s : cfg.stages) {
    if (s.downsample) cur = (cur + 1) / 2;
    g.stages.push_back(cur);
  }
  return g;
}

namespace {

StageSpec conv_stem(int64_t width) { return {StageKind::kConv, 2, width, true}; }
StageSpec mb(int64_t depth, int64_t width) {
  return {StageKind::kMBConv, depth, width, true};
}
StageSpec tfm(int64_t depth, int64_t width) {
  return {StageKind::kTfm, depth, width, true};
}

ModelConfig standard(const std::string& name, int64_t d0, StageSpec s1,
                     StageSpec s2, StageSpec s3, StageSpec s4) {
  ModelConfig cfg;
  cfg.name = name;
  cfg.stem = conv_stem(d0);
  cfg.stages = {s1, s2, s3, s4};
  return cfg;
}

// Five layout variants at the tiny scale (32x32 input, 10 classes).
// Widths and depths follow `tiny`; ViT_rel trades the multi-stage layout for
// a stride-4 patchify stem and 5 blocks of width 96, which keeps the
// parameter counts within a few percent of each other.
ModelConfig layout(const std::string& name, const std::string& kinds) {
  ModelConfig cfg;
  cfg.name = "layout:" + name;
  cfg.num_classes = 10;
  cfg.head_dim = 16;
  cfg.image_size = 32;
  if (kinds.empty()) {
    cfg.stem = {StageKind::kConv, 1, 96, true};
    cfg.stem_patch = 4;
    cfg.stages = {{StageKind::kTfm, 5, 96, false}};
    return cfg;
  }
  cfg.stem = conv_stem(16);
  const int64_t depths[4] = {2, 2, 3, 2};
  const int64_t widths[4] = {16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    cfg.stages.push_back(
        {kinds[i] == 'C' ? StageKind::kMBConv : StageKind::kTfm, depths[i],
         widths[i], true});
  }
  return cfg;
}

}  // namespace

ModelConfig family_config(const std::string& name) {
  if (name == "coatnet-0")
    return standard(name, 64, mb(2, 96), mb(3, 192), tfm(5, 384), tfm(2, 768));
  if (name == "coatnet-1")
    return standard(name, 64, mb(2, 96), mb(6, 192), tfm(14, 384), tfm(2, 768));
  if (name == "coatnet-2")
    return standard(name, 128, mb(2, 128), mb(6, 256), tfm(14, 512),
                    tfm(2, 1024));
  if (name == "coatnet-3")
    return standard(name, 192, mb(2, 192), mb(6, 384), tfm(14, 768),
                    tfm(2, 1536));
  if (name == "coatnet-4")
    return standard(name, 192, mb(2, 192), mb(12, 384), tfm(28, 768),
                    tfm(2, 1536));
  if (name == "coatnet-5") {
    ModelConfig cfg = standard(name, 192, mb(2, 256), mb(12, 512),
                               tfm(28, 1280), tfm(2, 2048));
    cfg.head_dim = 64;
    return cfg;
  }
  if (name == "coatnet-6" || name == "coatnet-7") {
    const bool six = name == "coatnet-6";
    ModelConfig cfg;
    cfg.name = name;
    cfg.stem = conv_stem(192);
    // S3 is mixed: an MBConv sub-stage (which down-samples) followed by a
    // transformer sub-stage at the same resolution.
    StageSpec s3_tfm = tfm(42, six ? 1536 : 2048);
    s3_tfm.downsample = false;
    cfg.stages = {mb(2, six ? 192 : 256), mb(4, six ? 384 : 512),
                  mb(8, six ? 768 : 1024), s3_tfm, tfm(2, six ? 2048 : 3072)};
    cfg.head_dim = 128;
    return cfg;
  }
  if (name == "tiny") {
    ModelConfig cfg =
        standard(name, 16, mb(2, 16), mb(2, 32), tfm(3, 64), tfm(2, 128));
    cfg.head_dim = 16;
    cfg.num_classes = 10;
    cfg.image_size = 32;
    return cfg;
  }
  if (name == "layout:ViT_rel") return layout("ViT_rel", "");
  if (name == "layout:CCCC") return layout("CCCC", "CCCC");
  if (name == "layout:CCCT") return layout("CCCT", "CCCT");
  if (name == "layout:CCTT") return layout("CCTT", "CCTT");
  if (name == "layout:CTTT") return layout("CTTT", "CTTT");
  throw ConfigError("unknown model '" + name + "'");
}

std::vector<std::string> family_names() {
  return {"coatnet-0", "coatnet-1", "coatnet-2", "coatnet-3",
          "coatnet-4", "coatnet-5", "coatnet-6", "coatnet-7",
          "tiny",      "layout:ViT_rel", "layout:CCCC", "layout:CCCT",
          "layout:CCTT", "layout:CTTT"};
}

std::vector<std::string> layout_names() {
  return {"layout:ViT_rel", "layout:CCCC", "layout:CCCT", "layout:CCTT",
          "layout:CTTT"};
}

namespace {

json stage_to_json(const StageSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"depth", s.depth},
          {"width", s.width},
          {"downsample", s.downsample}};
}

StageSpec stage_from_json(const json& j) {
  jsonutil::reject_unknown(j, {"kind", "depth", "width", "downsample"},
                           "stage");
  StageSpec s;
  s.kind = stage_kind_from_string(j.at("kind").get<std::string>());
  s.depth = j.at("depth").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.downsample = j.value("downsample", true);
  return s;
}

}  // namespace

std::string to_json(const ModelConfig& cfg, int indent) {
  json stages = json::array();
  for (const auto& s : cfg.stages) stages.push_back(stage_to_json(s));
  json j = {{"name", cfg.name},
            {"stem", stage_to_json(cfg.stem)},
            {"stem_patch", cfg.stem_patch},
            {"stages", stages},
            {"num_classes", cfg.num_classes},
            {"head_dim", cfg.head_dim},
            {"image_size", cfg.image_size},
            {"norm_kind", to_string(cfg.norm_kind)},
            {"attn_mode", to_string(cfg.attn_mode)},
            {"downsample_variant", to_string(cfg.downsample_variant)},
            {"stochastic_depth_rate", cfg.stochastic_depth_rate}};
  return j.dump(indent);
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") +
                      e.what());
  }
  return jsonutil::guarded("model config", [&] {
    jsonutil::reject_unknown(
        j,
        {"base", "name", "stem", "stem_patch", "stages", "num_classes",
         "head_dim", "image_size", "norm_kind", "attn_mode",
         "downsample_variant", "stochastic_depth_rate"},
        "model config");
    ModelConfig cfg;
    if (j.contains("base")) {
      cfg = family_config(j.at("base").get<std::string>());
    }
    if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
    if (j.contains("stem")) cfg.stem = stage_from_json(j.at("stem"));
    if (j.contains("stem_patch")) cfg.stem_patch = j.at("stem_patch");
    if (j.contains("stages")) {
      cfg.stages.clear();
      for (const auto& s : j.at("stages")) cfg.stages.push_back(stage_from_json(s));
    }
    if (j.contains("num_classes")) cfg.num_classes = j.at("num_classes");
    if (j.contains("head_dim")) cfg.head_dim = j.at("head_dim");
    if (j.contains("image_size")) cfg.image_size = j.at("image_size");
    if (j.contains("norm_kind")) {
      cfg.norm_kind = norm_kind_from_string(j.at("norm_kind"));
    }
    if (j.contains("attn_mode")) {
      cfg.attn_mode = attn_mode_from_string(j.at("attn_mode"));
    }
    if (j.contains("downsample_variant")) {
      cfg.downsample_variant =
          downsample_variant_from_string(j.at("downsample_variant"));
    }
    if (j.contains("stochastic_depth_rate")) {
      cfg.stochastic_depth_rate = j.at("stochastic_depth_rate");
    }
    return cfg;
  });
}

}  // namespace coatnet
