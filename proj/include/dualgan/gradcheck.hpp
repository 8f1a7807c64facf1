/* Copyright 2026 The dualgan Authors. All Rights Reserved.

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// Worst relative disagreement between the autodiff gradient of a scalar function and
/// central differences (f(x+eps) - f(x-eps)) / (2 eps), over every coordinate of every
/// input. `f` must read the current values of `inputs` (leaves with requires_grad) each
/// time it is called. Relative error is |a - n| / max(|a|, |n|, floor).
template <typename F>
double check_gradients(F&& f, std::vector<Tensor<double>> inputs, double eps = 1e-6, double floor = 1e-6) {
  if (!(eps > 0.0)) throw UsageError("check_gradients: eps must be positive");
  for (auto& x : inputs) {
    if (!x.is_leaf() || !x.requires_grad()) throw UsageError("check_gradients: inputs must be leaves with requires_grad");
    x.zero_grad();
  }
  const Tensor<double> loss = f();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double fp = f().item();
      values[i] = saved - eps;
      const double fm = f().item();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace dualgan
