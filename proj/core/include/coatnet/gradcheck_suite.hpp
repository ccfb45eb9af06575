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

#ifndef COATNET_GRADCHECK_SUITE_HPP_
#define COATNET_GRADCHECK_SUITE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "coatnet/gradcheck.hpp"

namespace coatnet {

enum class GradScope { kOp, kBlock, kModel };

GradScope grad_scope_from_string(const std::string& s);

// 64-bit finite-difference suites. kOp covers every differentiable
// primitive, kBlock every block type across strides, down-sampling variants,
// norms and attention modes, kModel the tiny network end to end (sampled
// coordinates of every parameter tensor and of the input).
std::vector<GradCheckResult> run_gradcheck_suite(
    GradScope scope, uint64_t seed, const GradCheckOptions& base = {});

}  // namespace coatnet

#endif  // COATNET_GRADCHECK_SUITE_HPP_
