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

#ifndef COATNET_TRAINER_HPP_
#define COATNET_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coatnet/data.hpp"
#include "coatnet/model.hpp"
#include "coatnet/optim.hpp"

namespace coatnet {

inline constexpr int kMetricsSchemaVersion = 1;

// One line of the metrics log, written at the end of every epoch.
struct EpochRecord {
  int64_t epoch = 0;
  int64_t step = 0;  // optimizer steps taken so far
  double lr = 0.0;   // learning rate of the last step
  double train_loss = 0.0;  // mean training loss over the epoch's batches
  double train_accuracy = 0.0;  // eval-mode accuracy on the training split
  double eval_accuracy = 0.0;
  double eval_loss = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct MetricsLog {
  std::vector<EpochRecord> records;

  // One JSON object per line; every line carries the schema version.
  static std::string to_line(const EpochRecord& r);
  std::string to_jsonl() const;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy without smoothing
  int64_t count = 0;
};

// Eval-mode accuracy and loss, processed in fixed-size batches.
EvalResult evaluate(Model<float>& model, const Dataset& data,
                    const NormStats& stats, int64_t batch_size = 256);

struct TrainOptions {
  // Evaluate eval-mode accuracy on the training split each epoch.
  bool measure_train_accuracy = true;
  // Called with every record as soon as it is complete.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Model<float> model;
  std::optional<Model<float>> ema;  // present when ema_decay > 0
  NormStats stats;
  MetricsLog log;
};

// Sequential steps: forward -> backward -> clip -> AdamW -> EMA. Batches are
// drawn from a seeded per-epoch permutation; the last partial batch is
// dropped unless it is the only one. Throws DivergedError on a non-finite
// loss. `eval` defaults to the training split.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const Dataset& data, const Dataset* eval = nullptr,
                  const TrainOptions& options = {});

}  // namespace coatnet

#endif  // COATNET_TRAINER_HPP_
