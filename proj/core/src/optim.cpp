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

#include "coatnet/optim.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"
#include "json_util.hpp"

namespace coatnet {

using nlohmann::ordered_json;

const char* to_string(DecaySchedule d) {
  switch (d) {
    case DecaySchedule::kCosine: return "cosine";
    case DecaySchedule::kLinear: return "linear";
    case DecaySchedule::kNone: return "none";
  }
  return "?";
}

DecaySchedule decay_schedule_from_string(const std::string& s) {
  if (s == "cosine") return DecaySchedule::kCosine;
  if (s == "linear") return DecaySchedule::kLinear;
  if (s == "none") return DecaySchedule::kNone;
  throw ConfigError("unknown decay schedule '" + s + "'");
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) {
    throw ConfigError("train config: " + what);
  };
  if (c.peak_lr < 0 || c.min_lr < 0) fail("learning rates must be >= 0");
  if (c.warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (c.weight_decay < 0) fail("weight_decay must be >= 0");
  if (c.clip_norm < 0) fail("clip_norm must be >= 0");
  if (c.label_smoothing < 0 || c.label_smoothing >= 1) {
    fail("label_smoothing must lie in [0, 1)");
  }
  if (c.mixup_alpha < 0) fail("mixup_alpha must be >= 0");
  if (c.ema_decay < 0 || c.ema_decay > 1) fail("ema_decay must lie in [0, 1]");
  if (c.epochs < 1 || c.batch_size < 1) fail("epochs and batch_size must be >= 1");
  if (c.beta1 < 0 || c.beta1 >= 1 || c.beta2 < 0 || c.beta2 >= 1) {
    fail("Adam betas must lie in [0, 1)");
  }
}

std::string to_json(const TrainConfig& c, int indent) {
  ordered_json j = {{"peak_lr", c.peak_lr},
                    {"min_lr", c.min_lr},
                    {"warmup_steps", c.warmup_steps},
                    {"decay", to_string(c.decay)},
                    {"weight_decay", c.weight_decay},
                    {"clip_norm", c.clip_norm},
                    {"label_smoothing", c.label_smoothing},
                    {"mixup_alpha", c.mixup_alpha},
                    {"ema_decay", c.ema_decay},
                    {"epochs", c.epochs},
                    {"batch_size", c.batch_size},
                    {"seed", c.seed},
                    {"beta1", c.beta1},
                    {"beta2", c.beta2},
                    {"adam_eps", c.adam_eps}};
  return j.dump(indent);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") +
                      e.what());
  }
  return jsonutil::guarded("train config", [&] {
    jsonutil::reject_unknown(
        j,
        {"peak_lr", "min_lr", "warmup_steps", "decay", "weight_decay",
         "clip_norm", "label_smoothing", "mixup_alpha", "ema_decay", "epochs",
         "batch_size", "seed", "beta1", "beta2", "adam_eps"},
        "train config");
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("peak_lr", c.peak_lr);
    get("min_lr", c.min_lr);
    get("warmup_steps", c.warmup_steps);
    if (j.contains("decay")) {
      c.decay = decay_schedule_from_string(j.at("decay").get<std::string>());
    }
    get("weight_decay", c.weight_decay);
    get("clip_norm", c.clip_norm);
    get("label_smoothing", c.label_smoothing);
    get("mixup_alpha", c.mixup_alpha);
    get("ema_decay", c.ema_decay);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    validate(c);
    return c;
  });
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0) return 0.0;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  }
  const int64_t span = total_steps - cfg.warmup_steps;
  if (cfg.decay == DecaySchedule::kNone || span <= 0) return cfg.peak_lr;
  const double p = std::min(
      1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span));
  const double shape = cfg.decay == DecaySchedule::kCosine
                           ? 0.5 * (1.0 + std::cos(std::numbers::pi * p))
                           : 1.0 - p;
  return cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * shape;
}

template <typename T>
AdamW<T>::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

template <typename T>
void AdamW<T>::add_param(const Tensor<T>& param, bool decay) {
  Slot s;
  s.param = param;
  s.decay = decay;
  s.m.assign(param.numel(), T(0));
  s.v.assign(param.numel(), T(0));
  slots_.push_back(std::move(s));
}

template <typename T>
void AdamW<T>::step(const GradMap<T>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Slot& s : slots_) {
    const Tensor<T> g_t = grads[s.param];
    const T* g = g_t.ptr();
    auto theta = s.param.mutable_data();
    const double wd = s.decay ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double m = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
      const double v = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
      s.m[i] = static_cast<T>(m);
      s.v[i] = static_cast<T>(v);
      const double update =
          (m / c1) / (std::sqrt(v / c2) + eps_) + wd * theta[i];
      theta[i] = static_cast<T>(theta[i] - lr * update);
    }
  }
}

template <typename T>
double clip_grad_norm(GradMap<T>& grads, const std::vector<Tensor<T>>& params,
                      double max_norm) {
  const double norm = grads.global_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    grads.scale(static_cast<T>(max_norm / norm));
  }
  return norm;
}

template <typename T>
void ema_update(std::vector<Tensor<T>>& shadow,
                const std::vector<Tensor<T>>& params, double decay) {
  if (shadow.size() != params.size()) {
    throw ShapeError("ema_update: shadow and params differ in length");
  }
  for (std::size_t k = 0; k < shadow.size(); ++k) {
    if (shadow[k].shape() != params[k].shape()) {
      throw ShapeError("ema_update: shape mismatch at tensor " +
                       std::to_string(k));
    }
    auto s = shadow[k].mutable_data();
    const T* p = params[k].ptr();
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = static_cast<T>(decay * s[i] + (1.0 - decay) * p[i]);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm(GradMap<float>&, const std::vector<Tensor<float>>&,
                               double);
template double clip_grad_norm(GradMap<double>&,
                               const std::vector<Tensor<double>>&, double);
template void ema_update(std::vector<Tensor<float>>&,
                         const std::vector<Tensor<float>>&, double);
template void ema_update(std::vector<Tensor<double>>&,
                         const std::vector<Tensor<double>>&, double);

}  // namespace coatnet
