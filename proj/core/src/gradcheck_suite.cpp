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

#include "coatnet/gradcheck_suite.hpp"

#include <map>
#include <random>

#include "coatnet/blocks.hpp"
#include "coatnet/data.hpp"
#include "coatnet/model.hpp"
#include "coatnet/ops.hpp"

namespace coatnet {

GradScope grad_scope_from_string(const std::string& s) {
  if (s == "op") return GradScope::kOp;
  if (s == "block") return GradScope::kBlock;
  if (s == "model") return GradScope::kModel;
  throw ConfigError("unknown gradcheck scope '" + s + "' (op|block|model)");
}

namespace {

using D = double;
using TD = Tensor<D>;
using Inputs = std::vector<TD>;

class Suite {
 public:
  Suite(uint64_t seed, const GradCheckOptions& opt) : seed_(seed), opt_(opt) {}

  // Untruncated: clamped samples would tie exactly and put max-pool inputs
  // on a kink.
  TD rnd(const Shape& s, double stddev = 1.0) {
    std::mt19937_64 rng(seed_ * 1000003ULL + ++counter_);
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = normal(rng);
    return TD(s, std::move(v));
  }

  // sum(out * R) with a fixed random R, so every output element carries a
  // distinct weight.
  TD weighted(const TD& out) {
    auto it = weights_.find(out.shape());
    if (it == weights_.end()) {
      it = weights_.emplace(out.shape(), rnd(out.shape())).first;
    }
    return sum(mul(out, it->second));
  }

  void check(const std::string& unit, const std::function<TD(const Inputs&)>& f,
             Inputs inputs, int64_t max_coords = 0) {
    GradCheckOptions o = opt_;
    o.seed = seed_ + results_.size();
    if (max_coords > 0) o.max_coords = max_coords;
    results_.push_back(check_gradients(
        unit, [&](const Inputs& in) { return weighted(f(in)); },
        std::move(inputs), o));
  }

  // Loss already scalar.
  void check_scalar(const std::string& unit,
                    const std::function<TD(const Inputs&)>& f, Inputs inputs,
                    int64_t max_coords = 0) {
    GradCheckOptions o = opt_;
    o.seed = seed_ + results_.size();
    if (max_coords > 0) o.max_coords = max_coords;
    results_.push_back(check_gradients(unit, f, std::move(inputs), o));
  }

  std::vector<GradCheckResult> take() { return std::move(results_); }
  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  GradCheckOptions opt_;
  uint64_t counter_ = 0;
  std::map<Shape, TD> weights_;
  std::vector<GradCheckResult> results_;
};

void op_suite(Suite& s) {
  s.check("add(broadcast)", [](const Inputs& a) { return add(a[0], a[1]); },
          {s.rnd({2, 3, 4}), s.rnd({4})});
  s.check("sub(broadcast)", [](const Inputs& a) { return sub(a[0], a[1]); },
          {s.rnd({2, 3, 4}), s.rnd({3, 1})});
  s.check("mul", [](const Inputs& a) { return mul(a[0], a[1]); },
          {s.rnd({2, 3}), s.rnd({2, 3})});
  s.check("div",
          [](const Inputs& a) {
            return div(a[0], add_scalar(mul(a[1], a[1]), 1.0));
          },
          {s.rnd({3, 4}), s.rnd({3, 4})});
  s.check("exp", [](const Inputs& a) { return exp(a[0]); }, {s.rnd({5})});
  s.check("scale", [](const Inputs& a) { return scale(a[0], -1.7); },
          {s.rnd({2, 2})});
  s.check("add_scalar", [](const Inputs& a) { return add_scalar(a[0], 0.3); },
          {s.rnd({3})});
  s.check_scalar("sum", [](const Inputs& a) { return sum(mul(a[0], a[0])); },
                 {s.rnd({2, 3})});
  s.check_scalar("mean", [](const Inputs& a) { return mean(mul(a[0], a[0])); },
                 {s.rnd({2, 3})});
  s.check("reshape", [](const Inputs& a) { return reshape(a[0], {3, 4}); },
          {s.rnd({2, 6})});
  s.check("permute",
          [](const Inputs& a) { return permute(a[0], {2, 0, 1}); },
          {s.rnd({2, 3, 4})});
  s.check("transpose", [](const Inputs& a) { return transpose(a[0]); },
          {s.rnd({2, 3, 4})});
  s.check("matmul(batched)", [](const Inputs& a) { return matmul(a[0], a[1]); },
          {s.rnd({2, 3, 4}), s.rnd({4, 5})});
  s.check("softmax(last)", [](const Inputs& a) { return softmax(a[0], -1); },
          {s.rnd({3, 5})});
  s.check("softmax(axis1)", [](const Inputs& a) { return softmax(a[0], 1); },
          {s.rnd({2, 4, 3})});
  {
    auto idx = std::make_shared<std::vector<int64_t>>(
        std::vector<int64_t>{0, 3, 3, 5, 1, 0, 2, 4});
    s.check("gather",
            [idx](const Inputs& a) { return gather(a[0], idx, {2, 4}); },
            {s.rnd({6})});
  }

  struct ConvCase {
    const char* name;
    Shape x;
    int64_t k, cout, stride, groups;
    Padding pad;
  };
  const ConvCase convs[] = {
      {"conv2d(3x3,s1)", {2, 5, 5, 3}, 3, 4, 1, 1, Padding::kSame},
      {"conv2d(3x3,s2)", {1, 5, 6, 2}, 3, 3, 2, 1, Padding::kSame},
      {"conv2d(1x1,s1)", {2, 3, 3, 4}, 1, 5, 1, 1, Padding::kSame},
      {"conv2d(1x1,s2)", {1, 5, 5, 3}, 1, 2, 2, 1, Padding::kSame},
      {"conv2d(depthwise,s1)", {2, 4, 4, 4}, 3, 4, 1, 4, Padding::kSame},
      {"conv2d(depthwise,s2)", {1, 5, 5, 3}, 3, 3, 2, 3, Padding::kSame},
      {"conv2d(grouped)", {1, 4, 4, 4}, 3, 6, 1, 2, Padding::kSame},
      {"conv2d(patch,valid)", {1, 8, 8, 3}, 4, 5, 4, 1, Padding::kValid},
  };
  for (const auto& c : convs) {
    const int64_t cin = c.x[3];
    s.check(c.name,
            [c](const Inputs& a) {
              ConvParams<D> p{a[1], a[2], c.stride, c.pad, c.groups};
              return conv2d(a[0], p);
            },
            {s.rnd(c.x), s.rnd({c.k, c.k, cin / c.groups, c.cout}, 0.5),
             s.rnd({c.cout})});
  }

  for (const bool training : {true, false}) {
    s.check(training ? "norm(batch,train)" : "norm(batch,eval)",
            [training](const Inputs& a) {
              NormParams<D> p = NormParams<D>::make(NormKind::kBatch, 3);
              p.gamma = a[1];
              p.beta = a[2];
              p.running_mean = TD({3}, {0.1, -0.2, 0.3});
              p.running_var = TD({3}, {0.5, 1.5, 2.0});
              return norm(a[0], p, training);
            },
            {s.rnd({2, 3, 3, 3}), s.rnd({3}), s.rnd({3})});
  }
  s.check("norm(layer)",
          [](const Inputs& a) {
            NormParams<D> p = NormParams<D>::make(NormKind::kLayer, 5);
            p.gamma = a[1];
            p.beta = a[2];
            return norm(a[0], p, true);
          },
          {s.rnd({2, 2, 2, 5}), s.rnd({5}), s.rnd({5})});
  s.check("gelu", [](const Inputs& a) { return gelu(a[0]); },
          {s.rnd({7}, 2.0)});
  s.check("sigmoid", [](const Inputs& a) { return sigmoid(a[0]); },
          {s.rnd({7}, 2.0)});
  s.check("max_pool2d", [](const Inputs& a) { return max_pool2d(a[0]); },
          {s.rnd({2, 5, 5, 2})});
  s.check("global_avg_pool",
          [](const Inputs& a) { return global_avg_pool(a[0]); },
          {s.rnd({2, 3, 4, 3})});
  s.check("linear",
          [](const Inputs& a) { return linear(a[0], a[1], a[2]); },
          {s.rnd({2, 3, 4}), s.rnd({4, 5}), s.rnd({5})});
  s.check("squeeze_excite",
          [](const Inputs& a) {
            return squeeze_excite(a[0], SqueezeExciteParams<D>{a[1], a[2], a[3],
                                                               a[4]});
          },
          {s.rnd({2, 3, 3, 8}), s.rnd({8, 2}), s.rnd({2}), s.rnd({2, 8}),
           s.rnd({8})});
  s.check("gather_bias",
          [](const Inputs& a) {
            return gather_bias(RelBiasTable<D>{a[0], 2, 3}, 2, 3);
          },
          {s.rnd({2, 3, 5})});
  for (AttnMode mode : {AttnMode::kPre, AttnMode::kPost, AttnMode::kNone}) {
    Inputs in = {s.rnd({2, 2, 3, 6}), s.rnd({6, 4}, 0.5), s.rnd({6, 4}, 0.5),
                 s.rnd({6, 4}, 0.5), s.rnd({4, 6}, 0.5), s.rnd({2, 3, 5}, 0.5)};
    s.check(std::string("relative_mhsa(") + to_string(mode) + ")",
            [mode](const Inputs& a) {
              AttnParams<D> p{2, 2, a[1], a[2], a[3], a[4]};
              RelBiasTable<D> t{a[5], 2, 3};
              return relative_mhsa(a[0], p, &t, mode);
            },
            in);
  }
  {
    const std::vector<int32_t> labels = {2, 0, 3};
    s.check_scalar("loss_ce_smooth",
                   [labels](const Inputs& a) {
                     return loss_ce_smooth(a[0], labels, 0.1);
                   },
                   {s.rnd({3, 4}, 2.0)});
  }
  s.check("stochastic_depth(train)",
          [](const Inputs& a) {
            std::mt19937_64 rng(11);
            return stochastic_depth(a[0], a[1], 0.5, true, rng);
          },
          {s.rnd({4, 2, 2, 3}), s.rnd({4, 2, 2, 3})});
}

// Every trainable block tensor becomes a checked input; buffers keep their
// initial values. Parameters are randomised around their initial values so
// zero-initialised tensors (biases, bias tables) are exercised too.
template <typename Cfg, typename W, typename Fwd>
void check_block(Suite& s, const std::string& unit, const Cfg& cfg,
                 const Shape& x_shape, Fwd fwd) {
  Inputs inputs = {s.rnd(x_shape)};
  {
    W w;
    visit<D>(cfg, w, "b", [&](const ParamSpec& spec, TD&) {
      if (!is_trainable(spec.role)) return;
      TD base = TD::create(spec.shape, spec.init, spec.scale, 1);
      inputs.push_back(add(base, s.rnd(spec.shape, 0.2)));
    });
  }
  s.check(unit,
          [cfg, fwd](const Inputs& a) {
            W w;
            std::size_t i = 1;
            visit<D>(cfg, w, "b", [&](const ParamSpec& spec, TD& t) {
              t = is_trainable(spec.role)
                      ? a[i++]
                      : TD::create(spec.shape, spec.init, spec.scale, 1);
            });
            return fwd(a[0], cfg, w, BlockContext{true, 0.0, nullptr});
          },
          inputs, 24);
}

void block_suite(Suite& s) {
  for (int64_t stride : {1, 2}) {
    const std::string st = ",s" + std::to_string(stride);
    for (int64_t d_out : {4, 6}) {
      if (stride == 2 && d_out == 4) continue;
      ConvBlockCfg c{4, d_out, stride, NormKind::kBatch};
      check_block<ConvBlockCfg, ConvBlockWeights<D>>(
          s, "conv_block(d" + std::to_string(d_out) + st + ")", c,
          {2, 4, 4, 4},
          [](const TD& x, const ConvBlockCfg& c, ConvBlockWeights<D>& w,
             const BlockContext& ctx) { return conv_block(x, c, w, ctx); });
    }
    for (auto variant :
         {DownsampleVariant::kProjPool, DownsampleVariant::kStridedDwconv}) {
      if (stride == 1 && variant == DownsampleVariant::kStridedDwconv) continue;
      for (NormKind nk : {NormKind::kBatch, NormKind::kLayer}) {
        MBConvCfg c{4, stride == 2 ? 8 : 4, stride, variant, nk};
        check_block<MBConvCfg, MBConvWeights<D>>(
            s,
            std::string("mbconv(") + to_string(variant) + "," + to_string(nk) +
                st + ")",
            c, {2, 4, 4, 4},
            [](const TD& x, const MBConvCfg& c, MBConvWeights<D>& w,
               const BlockContext& ctx) { return mbconv(x, c, w, ctx); });
      }
    }
    for (AttnMode mode : {AttnMode::kPre, AttnMode::kPost, AttnMode::kNone}) {
      TfmCfg c;
      c.d_in = 4;
      c.d_out = stride == 2 ? 8 : 4;
      c.stride = stride;
      c.head_dim = 2;
      c.attn_mode = mode;
      c.grid_h = c.grid_w = stride == 2 ? 2 : 4;
      check_block<TfmCfg, TfmWeights<D>>(
          s, std::string("tfm_block(") + to_string(mode) + st + ")", c,
          {2, 4, 4, 4},
          [](const TD& x, const TfmCfg& c, TfmWeights<D>& w,
             const BlockContext& ctx) { return tfm_block(x, c, w, ctx); });
    }
  }
}

void model_suite(Suite& s) {
  const ModelConfig cfg = family_config("tiny");
  Model<D> model = build_model<D>(cfg, s.seed());
  Inputs inputs = {s.rnd({2, cfg.image_size, cfg.image_size, 3})};
  for (auto& p : model.parameters()) {
    // Perturb the zero-initialised tensors so their gradients are generic.
    inputs.push_back(p.role == ParamRole::kWeight
                         ? p.tensor.clone()
                         : add(p.tensor, s.rnd(p.tensor.shape(), 0.1)));
  }
  const std::vector<int32_t> labels = {3, 7};
  s.check_scalar("model(tiny)",
                 [&model, labels](const Inputs& a) {
                   model.rebind(Inputs(a.begin() + 1, a.end()));
                   return loss_ce_smooth(model.forward(a[0], true, 5), labels,
                                         0.1);
                 },
                 inputs, 6);
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(GradScope scope,
                                                 uint64_t seed,
                                                 const GradCheckOptions& base) {
  Suite s(seed, base);
  switch (scope) {
    case GradScope::kOp: op_suite(s); break;
    case GradScope::kBlock: block_suite(s); break;
    case GradScope::kModel: model_suite(s); break;
  }
  return s.take();
}

}  // namespace coatnet
