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

#include "coatnet/trainer.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "coatnet/autodiff.hpp"
#include "json.hpp"

namespace coatnet {

std::string MetricsLog::to_line(const EpochRecord& r) {
  nlohmann::ordered_json j = {{"schema_version", kMetricsSchemaVersion},
                              {"epoch", r.epoch},
                              {"step", r.step},
                              {"lr", r.lr},
                              {"train_loss", r.train_loss},
                              {"train_accuracy", r.train_accuracy},
                              {"eval_accuracy", r.eval_accuracy},
                              {"eval_loss", r.eval_loss}};
  return j.dump();
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) out += to_line(r) + "\n";
  return out;
}

EvalResult evaluate(Model<float>& model, const Dataset& data,
                    const NormStats& stats, int64_t batch_size) {
  check_labels(data.labels, model.config().num_classes);
  EvalResult r;
  r.count = data.size();
  int64_t correct = 0;
  double loss_sum = 0.0;
  const int64_t k = model.config().num_classes;
  for (int64_t start = 0; start < data.size(); start += batch_size) {
    const int64_t end = std::min(data.size(), start + batch_size);
    std::vector<int64_t> idx(end - start);
    std::vector<int32_t> labels(end - start);
    for (int64_t i = start; i < end; ++i) {
      idx[i - start] = i;
      labels[i - start] = data.labels[i];
    }
    const Tensor<float> logits =
        model.forward(normalized_batch<float>(data, idx, stats), false);
    loss_sum += static_cast<double>(loss_ce_smooth(logits, labels, 0.0).item()) *
                static_cast<double>(end - start);
    const float* z = logits.ptr();
    for (int64_t i = 0; i < end - start; ++i) {
      int64_t best = 0;
      for (int64_t j = 1; j < k; ++j) {
        if (z[i * k + j] > z[i * k + best]) best = j;
      }
      if (best == labels[i]) ++correct;
    }
  }
  if (r.count > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
    r.loss = loss_sum / static_cast<double>(r.count);
  }
  return r;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const Dataset& data, const Dataset* eval,
                  const TrainOptions& options) {
  validate(model_cfg);
  validate(cfg);
  check_labels(data.labels, model_cfg.num_classes);
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (eval == nullptr) eval = &data;

  TrainResult result{build_model<float>(model_cfg, cfg.seed), std::nullopt,
                     compute_norm_stats(data), {}};
  Model<float>& model = result.model;
  model.set_requires_grad(true);

  const auto params = model.parameters();
  std::vector<Tensor<float>> param_tensors;
  AdamW<float> opt(cfg);
  for (const auto& p : params) {
    param_tensors.push_back(p.tensor);
    opt.add_param(p.tensor, is_decayed(p.role));
  }

  std::vector<Tensor<float>> live_all, shadow_all;
  if (cfg.ema_decay > 0.0) {
    result.ema = model.clone();
    for (auto& nt : model.named_tensors()) live_all.push_back(nt.tensor);
    for (auto& nt : result.ema->named_tensors()) shadow_all.push_back(nt.tensor);
  }

  const int64_t n = data.size();
  const int64_t bs = std::min(cfg.batch_size, n);
  const int64_t steps_per_epoch = n / bs;
  const int64_t total_steps = cfg.epochs * steps_per_epoch;
  const int64_t k = model_cfg.num_classes;
  std::mt19937_64 rng(cfg.seed ^ 0x5eed0fda7aULL);

  std::vector<int64_t> order(n);
  int64_t step = 0;
  double lr = 0.0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    for (int64_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng() % static_cast<uint64_t>(i + 1)]);
    }
    double loss_sum = 0.0;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<int64_t> idx(order.begin() + b * bs,
                               order.begin() + (b + 1) * bs);
      std::vector<int32_t> labels(bs);
      for (int64_t i = 0; i < bs; ++i) labels[i] = data.labels[idx[i]];
      Tensor<float> x = normalized_batch<float>(data, idx, result.stats);
      Tensor<float> targets =
          smoothed_targets<float>(labels, k, cfg.label_smoothing);
      if (cfg.mixup_alpha > 0.0) {
        MixupBatch<float> mb = mixup(x, targets, cfg.mixup_alpha, rng);
        x = mb.images;
        targets = mb.targets;
      }
      lr = lr_at(step + 1, total_steps, cfg);

      GradMap<float> grads;
      double loss_value;
      {
        Tape<float> tape;
        const Tensor<float> logits =
            model.forward(x, true, cfg.seed * 0x9e3779b97f4a7c15ULL + step);
        const Tensor<float> loss = cross_entropy(logits, targets);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw DivergedError("non-finite training loss at step " +
                                  std::to_string(step + 1),
                              static_cast<long>(step + 1));
        }
        grads = tape.backward(loss);
      }
      if (cfg.clip_norm > 0.0) clip_grad_norm(grads, param_tensors, cfg.clip_norm);
      opt.step(grads, lr);
      model.mark_updated();
      ++step;
      if (result.ema) {
        ema_update(shadow_all, live_all, cfg.ema_decay);
        result.ema->mark_updated();
      }
      loss_sum += loss_value;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    const EvalResult ev = evaluate(model, *eval, result.stats);
    rec.eval_accuracy = ev.accuracy;
    rec.eval_loss = ev.loss;
    if (eval == &data) {
      rec.train_accuracy = ev.accuracy;
    } else if (options.measure_train_accuracy) {
      rec.train_accuracy = evaluate(model, data, result.stats).accuracy;
    }
    result.log.records.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  model.set_requires_grad(false);
  return result;
}

}  // namespace coatnet
