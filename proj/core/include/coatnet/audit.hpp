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

#ifndef COATNET_AUDIT_HPP_
#define COATNET_AUDIT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "coatnet/config.hpp"

namespace coatnet {

inline constexpr int kAuditSchemaVersion = 1;

struct StageAudit {
  std::string label;  // "S0", "S1", ..., "head"
  std::string kind;   // "conv", "mbconv", "tfm_rel", "head"
  int64_t depth = 0;
  int64_t width = 0;
  int64_t grid = 0;  // output spatial extent
  int64_t params = 0;
  int64_t macs = 0;
};

// Parameter and multiply-accumulate counts from closed-form per-block
// formulas; nothing is allocated. Counted MACs: convolutions, linear
// layers, attention logits and attention aggregation. Norms, activations,
// pooling and bias gathers are free. Reported FLOPs are MACs (1 MAC = 1
// FLOP). Bias tables are sized for `resolution`, i.e. the model as it would
// be after adapt_resolution.
struct AuditReport {
  std::string model;
  int64_t resolution = 0;
  std::vector<StageAudit> stages;
  int64_t total_params = 0;
  int64_t total_macs = 0;
};

AuditReport summarize(const ModelConfig& cfg, int64_t resolution);

std::string to_text(const AuditReport& report);
std::string to_json(const AuditReport& report, int indent = 2);

}  // namespace coatnet

#endif  // COATNET_AUDIT_HPP_
