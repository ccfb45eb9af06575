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

#ifndef COATNET_OPTIM_HPP_
#define COATNET_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "coatnet/autodiff.hpp"
#include "coatnet/tensor.hpp"

namespace coatnet {

enum class DecaySchedule { kCosine, kLinear, kNone };

const char* to_string(DecaySchedule d);
DecaySchedule decay_schedule_from_string(const std::string& s);

// Optimizer, schedule and regularization settings. Defaults are the
// ImageNet-1K pre-training values; epochs and batch size are desk-scale.
struct TrainConfig {
  double peak_lr = 1e-3;
  double min_lr = 1e-5;
  int64_t warmup_steps = 0;
  DecaySchedule decay = DecaySchedule::kCosine;
  double weight_decay = 0.05;
  double clip_norm = 1.0;  // 0 disables clipping
  double label_smoothing = 0.1;
  double mixup_alpha = 0.8;  // 0 disables mixup
  double ema_decay = 0.9999;  // 0 disables EMA
  int64_t epochs = 20;
  int64_t batch_size = 128;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);
std::string to_json(const TrainConfig& cfg, int indent = 2);
// Keys absent from the document keep their defaults; unknown keys throw.
TrainConfig train_config_from_json(const std::string& text);

// Linear warmup 0 -> peak over warmup_steps, then decay peak -> min reached
// at total_steps.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

// AdamW with bias correction and decoupled weight decay:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
// where wd is applied only to tensors registered with decay = true.
template <typename T>
class AdamW {
 public:
  struct Slot {
    Tensor<T> param;
    bool decay = true;
    std::vector<T> m, v;
  };

  AdamW(double beta1, double beta2, double eps, double weight_decay);
  explicit AdamW(const TrainConfig& cfg)
      : AdamW(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay) {}

  void add_param(const Tensor<T>& param, bool decay);
  // One update; gradients of unreached parameters are zero.
  void step(const GradMap<T>& grads, double lr);
  int64_t steps() const { return t_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(GradMap<T>& grads, const std::vector<Tensor<T>>& params,
                      double max_norm);

// shadow <- decay * shadow + (1 - decay) * params, elementwise.
template <typename T>
void ema_update(std::vector<Tensor<T>>& shadow,
                const std::vector<Tensor<T>>& params, double decay);

}  // namespace coatnet

#endif  // COATNET_OPTIM_HPP_
