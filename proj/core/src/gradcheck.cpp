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

#include "coatnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "coatnet/autodiff.hpp"

namespace coatnet {

Tensor<double> finite_diff(const ScalarFn& f, const Tensor<double>& x,
                           double eps, const std::vector<int64_t>& coords) {
  Tensor<double> probe = x.detach().clone();
  std::vector<double> grad(x.numel(), 0.0);
  auto values = probe.mutable_data();
  for (int64_t i : coords) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double plus = f(probe);
    values[i] = saved - eps;
    const double minus = f(probe);
    values[i] = saved;
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return Tensor<double>(x.shape(), std::move(grad));
}

Tensor<double> finite_diff(const ScalarFn& f, const Tensor<double>& x,
                           double eps) {
  std::vector<int64_t> all(x.numel());
  std::iota(all.begin(), all.end(), 0);
  return finite_diff(f, x, eps, all);
}

double max_relative_error(const Tensor<double>& analytic,
                          const Tensor<double>& numeric,
                          const std::vector<int64_t>& coords, double floor) {
  auto a = analytic.data();
  auto n = numeric.data();
  double worst = 0.0;
  auto visit = [&](int64_t i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  };
  if (coords.empty()) {
    for (int64_t i = 0; i < analytic.numel(); ++i) visit(i);
  } else {
    for (int64_t i : coords) visit(i);
  }
  return worst;
}

GradCheckResult check_gradients(const std::string& unit,
                                const LossBuilder& loss,
                                std::vector<Tensor<double>> inputs,
                                const GradCheckOptions& options) {
  GradCheckResult result;
  result.unit = unit;

  for (auto& t : inputs) t = t.detach().clone();

  std::vector<Tensor<double>> watched = inputs;
  for (auto& t : watched) t.set_requires_grad(true);
  GradMap<double> grads;
  {
    Tape<double> tape;
    Tensor<double> l = loss(watched);
    grads = tape.backward(l);
  }

  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<int64_t> coords(inputs[k].numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 &&
        static_cast<int64_t>(coords.size()) > options.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto f = [&](const Tensor<double>& probe) {
      std::vector<Tensor<double>> args = inputs;
      args[k] = probe;
      return loss(args).item();
    };
    Tensor<double> numeric = finite_diff(f, inputs[k], options.eps, coords);
    Tensor<double> analytic = grads[watched[k]];
    result.max_rel_error = std::max(
        result.max_rel_error, max_relative_error(analytic, numeric, coords));
    result.coords_checked += static_cast<int64_t>(coords.size());
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

}  // namespace coatnet
