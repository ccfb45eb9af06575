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

#include "coatnet/model.hpp"

#include <atomic>
#include <map>

#include "coatnet/ops.hpp"

namespace coatnet {

namespace {

std::atomic<uint64_t> g_next_version{1};

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* kind_label(StageKind kind) {
  switch (kind) {
    case StageKind::kConv: return "Conv";
    case StageKind::kMBConv: return "MBConv";
    case StageKind::kTfm: return "TFM_Rel";
  }
  return "?";
}

}  // namespace

uint64_t param_seed(uint64_t model_seed, const std::string& name) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(model_seed) ^ h);
}

std::string stage_label(const ModelConfig& cfg, std::size_t index) {
  int number = 0;
  for (std::size_t j = 0; j <= index && j < cfg.stages.size(); ++j) {
    if (j == 0 || cfg.stages[j].downsample) ++number;
  }
  const bool split =
      (index > 0 && !cfg.stages[index].downsample) ||
      (index + 1 < cfg.stages.size() && !cfg.stages[index + 1].downsample);
  std::string label = "S" + std::to_string(number);
  if (split) label += std::string("-") + kind_label(cfg.stages[index].kind);
  return label;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  const int64_t stem_convs = cfg.stem.depth;
  stem_.convs.resize(stem_convs);
  stem_.norms.resize(stem_convs - 1);

  const StageGrids grids = stage_grids(cfg, cfg.image_size);
  int64_t d_in = cfg.stem.width;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& spec = cfg.stages[s];
    for (int64_t l = 0; l < spec.depth; ++l) {
      const int64_t stride = (l == 0 && spec.downsample) ? 2 : 1;
      Block<T> b;
      b.stage = s;
      b.index = l;
      switch (spec.kind) {
        case StageKind::kConv: {
          ConvBlock<T> blk;
          blk.cfg = {d_in, spec.width, stride, cfg.norm_kind};
          b.body = std::move(blk);
          break;
        }
        case StageKind::kMBConv: {
          MBConvBlock<T> blk;
          blk.cfg = {d_in, spec.width, stride, cfg.downsample_variant,
                     cfg.norm_kind};
          b.body = std::move(blk);
          break;
        }
        case StageKind::kTfm: {
          TfmBlock<T> blk;
          blk.cfg.d_in = d_in;
          blk.cfg.d_out = spec.width;
          blk.cfg.stride = stride;
          blk.cfg.head_dim = cfg.head_dim;
          blk.cfg.attn_mode = cfg.attn_mode;
          blk.cfg.grid_h = grids.stages[s];
          blk.cfg.grid_w = grids.stages[s];
          blk.cache = std::make_shared<GatheredBiasCache<T>>();
          b.body = std::move(blk);
          break;
        }
      }
      blocks_.push_back(std::move(b));
      d_in = spec.width;
    }
  }
  // Configure strides, groups and norm kinds without allocating.
  visit([](const ParamSpec&, Tensor<T>&) {});
}

template <typename T>
void Model<T>::visit(const ParamVisitor<T>& fn) {
  const int64_t d0 = cfg_.stem.width;
  if (cfg_.stem_patch > 0) {
    visit_conv<T>(cfg_.stem_patch, 3, d0, 1, true, stem_.convs[0],
                  "stem.conv0", fn);
    stem_.convs[0].stride = cfg_.stem_patch;
    stem_.convs[0].padding = Padding::kValid;
  } else {
    visit_conv<T>(kConvKernel, 3, d0, 1, true, stem_.convs[0], "stem.conv0",
                  fn);
    stem_.convs[0].stride = 2;
  }
  for (std::size_t i = 1; i < stem_.convs.size(); ++i) {
    const std::string idx = std::to_string(i);
    visit_norm(cfg_.norm_kind, d0, stem_.norms[i - 1], "stem.norm" + idx, fn);
    visit_conv<T>(kConvKernel, d0, d0, 1, true, stem_.convs[i],
                  "stem.conv" + idx, fn);
  }
  for (auto& b : blocks_) {
    const std::string prefix = "stages." + std::to_string(b.stage) +
                               ".blocks." + std::to_string(b.index);
    std::visit([&](auto& blk) { coatnet::visit(blk.cfg, blk.w, prefix, fn); },
               b.body);
  }
  const int64_t d_last = cfg_.stages.back().width;
  visit_norm(NormKind::kLayer, d_last, head_.norm, "head.norm", fn);
  fn({"head.fc.weight", {d_last, cfg_.num_classes}, ParamRole::kWeight,
      Init::kTruncNormal, kProjInitStddev},
     head_.w);
  fn({"head.fc.bias", {cfg_.num_classes}, ParamRole::kBias, Init::kZeros, 0.0},
     head_.b);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, bool training,
                            uint64_t step_seed, ForwardTrace* trace) {
  if (images.rank() != 4 || images.dim(3) != 3) {
    throw ShapeError("model input must be [N,H,W,3], got " +
                     shape_str(images.shape()));
  }
  const int64_t stride = total_stride(cfg_);
  if (images.dim(1) % stride != 0 || images.dim(2) % stride != 0) {
    throw ResolutionError("input " + std::to_string(images.dim(1)) + "x" +
                          std::to_string(images.dim(2)) +
                          " is not divisible by the total stride " +
                          std::to_string(stride));
  }
  Tensor<T> h = conv2d(images, stem_.convs[0]);
  for (std::size_t i = 1; i < stem_.convs.size(); ++i) {
    h = conv2d(gelu(norm(h, stem_.norms[i - 1], training)), stem_.convs[i]);
  }
  if (trace != nullptr) trace->stem = h.shape();

  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    Block<T>& b = blocks_[bi];
    std::mt19937_64 rng(splitmix64(step_seed ^ splitmix64(bi + 1)));
    const BlockContext ctx{training, cfg_.stochastic_depth_rate, &rng};
    if (auto* c = std::get_if<ConvBlock<T>>(&b.body)) {
      h = conv_block(h, c->cfg, c->w, ctx);
    } else if (auto* m = std::get_if<MBConvBlock<T>>(&b.body)) {
      h = mbconv(h, m->cfg, m->w, ctx);
    } else {
      auto& t = std::get<TfmBlock<T>>(b.body);
      const int64_t gh = t.cfg.stride == 2 ? (h.dim(1) + 1) / 2 : h.dim(1);
      const int64_t gw = t.cfg.stride == 2 ? (h.dim(2) + 1) / 2 : h.dim(2);
      const bool cacheable = !training && t.cfg.attn_mode != AttnMode::kNone &&
                             gh == t.w.bias.base_h && gw == t.w.bias.base_w;
      if (cacheable) {
        const Tensor<T> bias = t.cache->get(t.w.bias, version_);
        h = tfm_block(h, t.cfg, t.w, ctx, &bias);
      } else {
        h = tfm_block(h, t.cfg, t.w, ctx);
      }
    }
    if (trace != nullptr) {
      trace->blocks.push_back(h.shape());
      if (bi + 1 == blocks_.size() || blocks_[bi + 1].stage != b.stage) {
        trace->stages.push_back(h.shape());
      }
    }
  }
  Tensor<T> pooled = norm(global_avg_pool(h), head_.norm, training);
  return linear(pooled, head_.w, head_.b);
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::named_tensors() {
  std::vector<NamedTensor<T>> out;
  visit([&](const ParamSpec& s, Tensor<T>& t) {
    out.push_back({s.name, t, s.role});
  });
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  visit([&](const ParamSpec& s, Tensor<T>& t) {
    if (is_trainable(s.role)) out.push_back({s.name, t, s.role});
  });
  return out;
}

template <typename T>
int64_t Model<T>::num_params() {
  int64_t n = 0;
  visit([&](const ParamSpec& s, Tensor<T>&) {
    if (is_trainable(s.role)) n += shape_numel(s.shape);
  });
  return n;
}

template <typename T>
void Model<T>::set_requires_grad(bool on) {
  visit([&](const ParamSpec& s, Tensor<T>& t) {
    if (is_trainable(s.role)) t.set_requires_grad(on);
  });
}

template <typename T>
void Model<T>::rebind(const std::vector<Tensor<T>>& params) {
  std::size_t i = 0;
  visit([&](const ParamSpec& s, Tensor<T>& t) {
    if (!is_trainable(s.role)) return;
    if (i >= params.size() || params[i].shape() != s.shape) {
      throw ShapeError("rebind: tensor " + std::to_string(i) + " (" + s.name +
                       ") missing or misshaped");
    }
    t = params[i++];
  });
  if (i != params.size()) throw ShapeError("rebind: too many tensors");
  mark_updated();
}

template <typename T>
void Model<T>::mark_updated() {
  version_ = g_next_version.fetch_add(1);
}

template <typename T>
Model<T> Model<T>::clone() const {
  auto src = const_cast<Model*>(this)->named_tensors();
  Model out(cfg_);
  std::size_t i = 0;
  out.visit([&](const ParamSpec&, Tensor<T>& t) {
    t = src[i].tensor.defined() ? src[i].tensor.detach().clone() : Tensor<T>();
    ++i;
  });
  out.mark_updated();
  return out;
}

template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed) {
  validate(cfg);
  Model<T> m(cfg);
  m.visit([&](const ParamSpec& s, Tensor<T>& t) {
    t = Tensor<T>::create(s.shape, s.init, s.scale, param_seed(seed, s.name));
  });
  m.mark_updated();
  return m;
}

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  validate(cfg);
  Model<float> m(cfg);
  std::vector<ParamSpec> out;
  m.visit([&](const ParamSpec& s, Tensor<float>&) { out.push_back(s); });
  return out;
}

template <typename T>
Model<T> adapt_resolution(const Model<T>& m, int64_t new_res) {
  const ModelConfig& old_cfg = m.config();
  if (new_res < old_cfg.image_size) {
    throw UnsupportedError("adapt_resolution only enlarges: " +
                           std::to_string(old_cfg.image_size) + " -> " +
                           std::to_string(new_res));
  }
  const int64_t stride = total_stride(old_cfg);
  if (new_res % stride != 0) {
    throw ResolutionError("resolution " + std::to_string(new_res) +
                          " is not divisible by the total stride " +
                          std::to_string(stride));
  }
  ModelConfig cfg = old_cfg;
  cfg.image_size = new_res;
  validate(cfg);

  std::map<std::string, Tensor<T>> src;
  for (auto& nt : const_cast<Model<T>&>(m).named_tensors()) {
    src[nt.name] = nt.tensor;
  }
  Model<T> out(cfg);
  out.visit([&](const ParamSpec& s, Tensor<T>& t) {
    const Tensor<T>& old = src.at(s.name);
    if (s.role == ParamRole::kRelBias) {
      const RelBiasTable<T> table{old.detach(), (old.dim(1) + 1) / 2,
                                  (old.dim(2) + 1) / 2};
      t = interpolate_bias(table, (s.shape[1] + 1) / 2, (s.shape[2] + 1) / 2)
              .table;
    } else {
      t = old.detach().clone();
    }
  });
  out.mark_updated();
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&, uint64_t);
template Model<double> build_model<double>(const ModelConfig&, uint64_t);
template Model<float> adapt_resolution(const Model<float>&, int64_t);
template Model<double> adapt_resolution(const Model<double>&, int64_t);

}  // namespace coatnet
