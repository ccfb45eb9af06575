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

#ifndef COATNET_MODEL_HPP_
#define COATNET_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "coatnet/blocks.hpp"
#include "coatnet/config.hpp"

namespace coatnet {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  ParamRole role = ParamRole::kWeight;
};

// Display label of stage `index` of cfg.stages: "S1".."S4", with a kind
// suffix when a stage is split into sub-stages ("S3-MBConv", "S3-TFM_Rel").
std::string stage_label(const ModelConfig& cfg, std::size_t index);

template <typename T>
struct StemWeights {
  std::vector<ConvParams<T>> convs;  // convs[0] has no norm in front
  std::vector<NormParams<T>> norms;  // norms[i] precedes convs[i + 1]
};

template <typename T>
struct HeadWeights {
  NormParams<T> norm;  // layer norm on the pooled features
  Tensor<T> w;
  Tensor<T> b;
};

template <typename T>
struct ConvBlock {
  ConvBlockCfg cfg;
  ConvBlockWeights<T> w;
};
template <typename T>
struct MBConvBlock {
  MBConvCfg cfg;
  MBConvWeights<T> w;
};
template <typename T>
struct TfmBlock {
  TfmCfg cfg;
  TfmWeights<T> w;
  std::shared_ptr<GatheredBiasCache<T>> cache;
};

template <typename T>
struct Block {
  std::size_t stage = 0;  // index into ModelConfig::stages
  int64_t index = 0;      // position within the stage
  std::variant<ConvBlock<T>, MBConvBlock<T>, TfmBlock<T>> body;
};

// Per-forward trace of feature-map shapes, for shape-contract checks.
struct ForwardTrace {
  Shape stem;
  std::vector<Shape> stages;  // output of each entry of ModelConfig::stages
  std::vector<Shape> blocks;  // output of every block
};

// A CoAtNet network: stem, stages of blocks, pooled classification head.
// Copies share tensor storage; use clone() for an independent copy.
template <typename T>
class Model {
 public:
  // Structure only; no tensor is allocated until visited by an initializer.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  // Resolution the relative bias tables are built for.
  int64_t resolution() const { return cfg_.image_size; }

  // [N, H, W, 3] -> [N, num_classes]. `step_seed` drives stochastic depth.
  Tensor<T> forward(const Tensor<T>& images, bool training,
                    uint64_t step_seed = 0, ForwardTrace* trace = nullptr);

  // Every tensor in a stable order: stem, blocks, head.
  void visit(const ParamVisitor<T>& fn);
  std::vector<NamedTensor<T>> named_tensors();
  // Trainable tensors only (no running statistics).
  std::vector<NamedTensor<T>> parameters();
  int64_t num_params();

  void set_requires_grad(bool on);
  // Replaces the trainable tensors, in parameters() order.
  void rebind(const std::vector<Tensor<T>>& params);

  // Must be called after parameter values change in place; invalidates the
  // eval-mode bias cache.
  void mark_updated();

  Model clone() const;

  const std::vector<Block<T>>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  StemWeights<T> stem_;
  std::vector<Block<T>> blocks_;
  HeadWeights<T> head_;
  uint64_t version_ = 0;
};

// Initializer seed of one tensor, derived from the model seed and its name.
uint64_t param_seed(uint64_t model_seed, const std::string& name);

// Validates cfg and materializes every tensor deterministically.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed);

// Shapes only: the tensors build_model would allocate, in the same order.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

// Copy of m whose bias tables are interpolated to the grids of `new_res`.
// Throws UnsupportedError for a smaller resolution.
template <typename T>
Model<T> adapt_resolution(const Model<T>& m, int64_t new_res);

}  // namespace coatnet

#endif  // COATNET_MODEL_HPP_
