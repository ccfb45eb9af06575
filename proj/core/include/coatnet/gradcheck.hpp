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

#ifndef COATNET_GRADCHECK_HPP_
#define COATNET_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coatnet/tensor.hpp"

namespace coatnet {

using ScalarFn = std::function<double(const Tensor<double>&)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
// coordinate of x.
Tensor<double> finite_diff(const ScalarFn& f, const Tensor<double>& x,
                           double eps);

// Same, restricted to `coords` (flat indices); other entries are zero.
Tensor<double> finite_diff(const ScalarFn& f, const Tensor<double>& x,
                           double eps, const std::vector<int64_t>& coords);

// |a - n| / max(|a|, |n|, floor), maximised over `coords` (all if empty).
// The floor keeps entries whose true gradient is ~0 from dominating.
double max_relative_error(const Tensor<double>& analytic,
                          const Tensor<double>& numeric,
                          const std::vector<int64_t>& coords = {},
                          double floor = 1e-5);

struct GradCheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-3;
  // Coordinates probed per input tensor; 0 probes all of them.
  int64_t max_coords = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  std::string unit;
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
  bool passed = false;
};

// Builds a scalar loss from `inputs`; it must be a pure function of their
// values. Each input is checked in turn against finite differences.
using LossBuilder =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

GradCheckResult check_gradients(const std::string& unit,
                                const LossBuilder& loss,
                                std::vector<Tensor<double>> inputs,
                                const GradCheckOptions& options = {});

}  // namespace coatnet

#endif  // COATNET_GRADCHECK_HPP_
