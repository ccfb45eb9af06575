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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "coatnet/audit.hpp"
#include "coatnet/autodiff.hpp"
#include "coatnet/model.hpp"
#include "coatnet/ops.hpp"
#include "test_util.hpp"

namespace coatnet {
namespace {

using testing::randn;

int64_t spec_params(const ModelConfig& cfg) {
  int64_t n = 0;
  for (const auto& s : param_specs(cfg)) {
    if (is_trainable(s.role)) n += shape_numel(s.shape);
  }
  return n;
}

TEST(FamilyConfig, TableShapes) {
  const ModelConfig c0 = family_config("coatnet-0");
  EXPECT_EQ(c0.stem.depth, 2);
  EXPECT_EQ(c0.stem.width, 64);
  ASSERT_EQ(c0.stages.size(), 4u);
  EXPECT_EQ(c0.stages[0].kind, StageKind::kMBConv);
  EXPECT_EQ(c0.stages[1].depth, 3);
  EXPECT_EQ(c0.stages[1].width, 192);
  EXPECT_EQ(c0.stages[2].kind, StageKind::kTfm);
  EXPECT_EQ(c0.stages[2].depth, 5);
  EXPECT_EQ(c0.stages[2].width, 384);
  EXPECT_EQ(c0.stages[3].width, 768);

  const ModelConfig c5 = family_config("coatnet-5");
  EXPECT_EQ(c5.head_dim, 64);
  EXPECT_EQ(c5.stages[2].depth, 28);
  EXPECT_EQ(c5.stages[2].width, 1280);

  const ModelConfig c6 = family_config("coatnet-6");
  EXPECT_EQ(c6.head_dim, 128);
  ASSERT_EQ(c6.stages.size(), 5u);
  EXPECT_EQ(c6.stages[2].kind, StageKind::kMBConv);
  EXPECT_EQ(c6.stages[2].depth, 8);
  EXPECT_EQ(c6.stages[3].kind, StageKind::kTfm);
  EXPECT_EQ(c6.stages[3].depth, 42);
  EXPECT_FALSE(c6.stages[3].downsample);
  EXPECT_EQ(stage_label(c6, 2), "S3-MBConv");
  EXPECT_EQ(stage_label(c6, 3), "S3-TFM_Rel");

  const ModelConfig tiny = family_config("tiny");
  EXPECT_EQ(tiny.image_size, 32);
  EXPECT_EQ(tiny.head_dim, 16);
  EXPECT_EQ(tiny.stages[3].width, 128);

  const ModelConfig cttt = family_config("layout:CTTT");
  EXPECT_EQ(cttt.stages[0].kind, StageKind::kMBConv);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(cttt.stages[i].kind, StageKind::kTfm);
  const ModelConfig cccc = family_config("layout:CCCC");
  for (const auto& s : cccc.stages) EXPECT_NE(s.kind, StageKind::kTfm);
  const ModelConfig vit = family_config("layout:ViT_rel");
  EXPECT_EQ(vit.stem_patch, 4);
  for (const auto& s : vit.stages) EXPECT_EQ(s.kind, StageKind::kTfm);

  EXPECT_THROW(family_config("coatnet-9"), ConfigError);
}

TEST(Validate, RejectsLayoutViolations) {
  ModelConfig c = family_config("tiny");
  std::swap(c.stages[1], c.stages[2]);
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(build_model<float>(c, 0), ConfigError);

  c = family_config("tiny");
  c.stages[0].kind = StageKind::kTfm;
  c.stages[1].kind = StageKind::kTfm;
  EXPECT_THROW(validate(c), ConfigError);

  c = family_config("tiny");
  c.stages[3].width = 32;
  EXPECT_THROW(validate(c), ConfigError);

  c = family_config("tiny");
  c.stages[2].width = 72;  // not a multiple of head_dim 16
  EXPECT_THROW(validate(c), ConfigError);

  c = family_config("tiny");
  c.image_size = 48;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(ConfigJson, RoundTripsEveryFamily) {
  for (const auto& name : family_names()) {
    const ModelConfig c = family_config(name);
    EXPECT_EQ(model_config_from_json(to_json(c)), c) << name;
  }
  const ModelConfig b =
      model_config_from_json(R"({"base": "tiny", "attn_mode": "post"})");
  EXPECT_EQ(b.attn_mode, AttnMode::kPost);
  EXPECT_EQ(b.stages, family_config("tiny").stages);
  EXPECT_THROW(model_config_from_json(R"({"base": "tiny", "bogus": 1})"),
               ConfigError);
  EXPECT_THROW(model_config_from_json("{not json"), ConfigError);
}

TEST(Geometry, FiveReductions) {
  const StageGrids g224 = stage_grids(family_config("coatnet-0"), 224);
  EXPECT_EQ(g224.stem, 112);
  EXPECT_EQ(g224.stages, (std::vector<int64_t>{56, 28, 14, 7}));
  const StageGrids g32 = stage_grids(family_config("tiny"), 32);
  EXPECT_EQ(g32.stages, (std::vector<int64_t>{8, 4, 2, 1}));
  EXPECT_EQ(total_stride(family_config("tiny")), 32);
  EXPECT_EQ(total_stride(family_config("layout:ViT_rel")), 4);
}

TEST(BuildModel, DeterministicPerSeed) {
  const ModelConfig c = family_config("tiny");
  Model<float> a = build_model<float>(c, 3);
  Model<float> b = build_model<float>(c, 3);
  Model<float> d = build_model<float>(c, 4);
  auto ta = a.named_tensors(), tb = b.named_tensors(), td = d.named_tensors();
  ASSERT_EQ(ta.size(), tb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].name, tb[i].name);
    EXPECT_TRUE(bit_equal(ta[i].tensor, tb[i].tensor)) << ta[i].name;
    if (!bit_equal(ta[i].tensor, td[i].tensor)) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(BuildModel, TensorNamesAndInitRules) {
  Model<float> m = build_model<float>(family_config("tiny"), 0);
  std::map<std::string, NamedTensor<float>> by_name;
  for (auto& nt : m.named_tensors()) by_name[nt.name] = nt;
  for (const char* n :
       {"stem.conv0.kernel", "stem.conv0.bias", "stem.norm1.gamma",
        "stem.norm1.moving_var", "stages.0.blocks.0.expand.kernel",
        "stages.0.blocks.0.se.reduce.weight", "stages.2.blocks.0.attn.rel_bias",
        "stages.2.blocks.0.ffn.fc1.weight", "head.norm.gamma",
        "head.fc.weight", "head.fc.bias"}) {
    EXPECT_TRUE(by_name.count(n)) << n;
  }
  EXPECT_EQ(by_name["stages.2.blocks.0.attn.rel_bias"].role, ParamRole::kRelBias);
  for (float v : by_name["stages.2.blocks.0.attn.rel_bias"].tensor.data()) {
    EXPECT_EQ(v, 0.0f);
  }
  EXPECT_EQ(by_name["stem.norm1.moving_var"].role, ParamRole::kBuffer);
  for (float v : by_name["head.fc.weight"].tensor.data()) {
    EXPECT_LE(std::abs(v), 2 * kProjInitStddev + 1e-7);
  }
}

TEST(Forward, TinyShapeContract) {
  Model<float> m = build_model<float>(family_config("tiny"), 1);
  ForwardTrace trace;
  const Tensor<float> logits =
      m.forward(randn<float>({3, 32, 32, 3}, 2), false, 0, &trace);
  EXPECT_EQ(logits.shape(), (Shape{3, 10}));
  EXPECT_EQ(trace.stem, (Shape{3, 16, 16, 16}));
  ASSERT_EQ(trace.stages.size(), 4u);
  const int64_t sides[] = {8, 4, 2, 1};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(trace.stages[i][1], sides[i]);
  // Each stage's first block halves the extent and sets the stage width.
  std::size_t b = 0;
  int64_t prev = 16;
  for (const auto& blk : m.blocks()) {
    const Shape& s = trace.blocks[b++];
    if (blk.index == 0) {
      EXPECT_EQ(s[1], prev / 2);
      EXPECT_EQ(s[3], m.config().stages[blk.stage].width);
    }
    prev = s[1];
  }
}

TEST(Forward, EvalIsDeterministicAndBatchIndependent) {
  Model<float> m = build_model<float>(family_config("tiny"), 5);
  const Tensor<float> x = randn<float>({4, 32, 32, 3}, 6);
  const Tensor<float> a = m.forward(x, false);
  EXPECT_TRUE(bit_equal(a, m.forward(x, false)));
  const std::vector<int64_t> perm = {2, 0, 3, 1};
  std::vector<float> px;
  for (int64_t i : perm) {
    px.insert(px.end(), x.ptr() + i * 32 * 32 * 3, x.ptr() + (i + 1) * 32 * 32 * 3);
  }
  const Tensor<float> b = m.forward(Tensor<float>(x.shape(), px), false);
  for (int64_t r = 0; r < 4; ++r)
    for (int64_t k = 0; k < 10; ++k) {
      EXPECT_NEAR(b.at({r, k}), a.at({perm[r], k}), 1e-5);
    }
}

TEST(Forward, InputGradientCoversEveryPixel) {
  Model<double> m = build_model<double>(family_config("tiny"), 7);
  Tensor<double> x = randn({1, 32, 32, 3}, 8);
  x.set_requires_grad(true);
  GradMap<double> g;
  {
    Tape<double> tape;
    g = tape.backward(mean(m.forward(x, false)));
  }
  const Tensor<double> gx = g[x];
  for (int64_t p = 0; p < 32 * 32; ++p) {
    double mag = 0.0;
    for (int64_t c = 0; c < 3; ++c) mag += std::abs(gx.ptr()[p * 3 + c]);
    ASSERT_GT(mag, 0.0) << "pixel " << p;
  }
}

TEST(Forward, WrongResolutionNamesAdaptation) {
  Model<float> m = build_model<float>(family_config("tiny"), 9);
  try {
    m.forward(randn<float>({1, 64, 64, 3}, 1), false);
    FAIL() << "expected ResolutionError";
  } catch (const ResolutionError& e) {
    EXPECT_NE(std::string(e.what()).find("adapt_resolution"), std::string::npos);
  }
  EXPECT_THROW(m.forward(randn<float>({1, 40, 40, 3}, 1), false),
               ResolutionError);
}

TEST(Audit, EqualsMaterializedCountForEveryFamily) {
  for (const auto& name : family_names()) {
    const ModelConfig c = family_config(name);
    const AuditReport r = summarize(c, c.image_size);
    EXPECT_EQ(r.total_params, spec_params(c)) << name;
    int64_t p = 0, macs = 0;
    for (const auto& s : r.stages) {
      p += s.params;
      macs += s.macs;
    }
    EXPECT_EQ(p, r.total_params) << name;
    EXPECT_EQ(macs, r.total_macs) << name;
  }
  for (const char* name : {"tiny", "layout:CCCT", "layout:CCTT"}) {
    Model<float> m = build_model<float>(family_config(name), 0);
    EXPECT_EQ(m.num_params(), spec_params(family_config(name)));
  }
}

TEST(Audit, MacsEqualExecutedWork) {
  for (const auto& name : layout_names()) {
    const ModelConfig c = family_config(name);
    Model<float> m = build_model<float>(c, 0);
    MacCounter mc;
    m.forward(randn<float>({1, 32, 32, 3}, 1), false);
    EXPECT_EQ(mc.count(), summarize(c, 32).total_macs) << name;
  }
}

TEST(Audit, HandArithmeticOnOnePointwiseConv) {
  // One D -> D 1x1 conv with bias at 1x1 resolution.
  const int64_t d = 12;
  ConvParams<double> p;
  int64_t params = 0;
  visit_conv<double>(1, d, d, 1, true, p, "c", [&](const ParamSpec& s, Tensor<double>& t) {
    t = Tensor<double>::zeros(s.shape);
    params += shape_numel(s.shape);
  });
  EXPECT_EQ(params, d * d + d);
  MacCounter mc;
  conv2d(Tensor<double>::zeros({1, 1, 1, d}), p);
  EXPECT_EQ(mc.count(), d * d);
}

TEST(Audit, AblationFlagsAreStructural) {
  const ModelConfig base = family_config("coatnet-0");
  const int64_t p0 = summarize(base, 224).total_params;

  ModelConfig none = base;
  none.attn_mode = AttnMode::kNone;
  // S3: 5 blocks, 12 heads, 14x14 grid; S4: 2 blocks, 24 heads, 7x7 grid.
  EXPECT_EQ(p0 - summarize(none, 224).total_params,
            5 * 12 * 27 * 27 + 2 * 24 * 13 * 13);

  ModelConfig wide = base;
  wide.head_dim = 64;
  EXPECT_EQ(p0 - summarize(wide, 224).total_params,
            5 * 6 * 27 * 27 + 2 * 12 * 13 * 13);

  ModelConfig ln = base;
  ln.norm_kind = NormKind::kLayer;
  EXPECT_EQ(summarize(ln, 224).total_params, p0);

  ModelConfig dw = base;
  dw.downsample_variant = DownsampleVariant::kStridedDwconv;
  EXPECT_EQ(summarize(dw, 224).total_params, p0);
  EXPECT_NE(summarize(dw, 224).total_macs, summarize(base, 224).total_macs);
}

TEST(Audit, LayoutVariantsAreParameterMatched) {
  int64_t lo = INT64_MAX, hi = 0;
  for (const auto& name : layout_names()) {
    const int64_t p = summarize(family_config(name), 32).total_params;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  EXPECT_EQ(layout_names().size(), 5u);
  EXPECT_LE(static_cast<double>(hi) / static_cast<double>(lo), 1.10);
}

TEST(Audit, JsonIsVersioned) {
  const std::string j = to_json(summarize(family_config("tiny"), 32));
  EXPECT_NE(j.find("\"schema_version\""), std::string::npos);
  EXPECT_NE(j.find("\"total_params\""), std::string::npos);
}

TEST(AdaptResolution, SameResolutionIsUnchanged) {
  Model<float> m = build_model<float>(family_config("tiny"), 10);
  for (auto& p : m.parameters()) {
    if (p.role == ParamRole::kRelBias) {
      p.tensor.mutable_data()[0] = 0.75f;
    }
  }
  Model<float> a = adapt_resolution(m, 32);
  auto ta = a.named_tensors(), tm = m.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_TRUE(bit_equal(ta[i].tensor, tm[i].tensor)) << ta[i].name;
  }
}

TEST(AdaptResolution, DoublingFollowsSizeFormula) {
  Model<float> m = build_model<float>(family_config("tiny"), 11);
  Model<float> a = adapt_resolution(m, 64);
  EXPECT_EQ(a.resolution(), 64);
  std::map<std::string, Shape> shapes;
  for (auto& nt : a.named_tensors()) shapes[nt.name] = nt.tensor.shape();
  // S3 runs on a 2x2 grid at 32 and 4x4 at 64; S4 on 1x1 and 2x2.
  EXPECT_EQ(shapes["stages.2.blocks.0.attn.rel_bias"], (Shape{4, 7, 7}));
  EXPECT_EQ(shapes["stages.3.blocks.1.attn.rel_bias"], (Shape{8, 3, 3}));
  EXPECT_EQ(a.forward(randn<float>({2, 64, 64, 3}, 1), false).shape(),
            (Shape{2, 10}));
  // Everything but the tables is carried over unchanged.
  auto tm = m.named_tensors(), ta = a.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].role != ParamRole::kRelBias) {
      EXPECT_TRUE(bit_equal(ta[i].tensor, tm[i].tensor)) << ta[i].name;
    }
  }
  EXPECT_THROW(adapt_resolution(m, 16), UnsupportedError);
  EXPECT_THROW(adapt_resolution(m, 48), ResolutionError);
}

}  // namespace
}  // namespace coatnet
