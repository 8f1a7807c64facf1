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
#include <span>
#include <string>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

struct RmsPropHyper {
  double lr = 5e-5;
  double rho = 0.9;
  double epsilon = 1e-8;
};

/// s <- rho*s + (1-rho)*g^2;  w <- w - lr*g/(sqrt(s)+epsilon). Elementwise, in place.
template <typename T>
void rmsprop_update(std::span<T> param, std::span<const T> grad, std::span<T> accum, const RmsPropHyper& h) {
  const T rho = static_cast<T>(h.rho), lr = static_cast<T>(h.lr), eps = static_cast<T>(h.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    accum[i] = rho * accum[i] + (T(1) - rho) * g * g;
    const T denom = std::sqrt(accum[i]) + eps;
    // g == 0 with s == 0 and eps == 0 would divide 0 by 0; a zero gradient moves nothing.
    if (g != T(0)) param[i] -= lr * g / denom;
  }
}

/// Accumulator state for one tensor.
template <typename T>
struct RmsPropState {
  std::vector<T> accum;
  RmsPropHyper hyper;
};

/// One RMSProp step on a single tensor. Throws if the tensor carries no gradient.
template <typename T>
void rmsprop_step(Tensor<T>& param, RmsPropState<T>& state) {
  if (!param.has_grad()) throw UsageError("rmsprop_step: parameter has no gradient");
  if (state.accum.empty()) state.accum.assign(param.numel(), T(0));
  if (state.accum.size() != param.numel()) throw DimensionError("rmsprop_step: accumulator size mismatch");
  rmsprop_update<T>(param.mutable_data(), param.grad(), state.accum, state.hyper);
  detail::require_finite<T>(param.data(), "rmsprop_step result");
}

/// RMSProp over every tensor of a ParamStore, one accumulator per entry.
template <typename T>
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(const ParamStore<T>& store, RmsPropHyper hyper) : hyper_(hyper) {
    for (const auto& e : store.entries()) states_.push_back({std::vector<T>(e.tensor.numel(), T(0)), hyper});
  }

  void step(ParamStore<T>& store) {
    if (store.size() != states_.size()) throw UsageError("RmsProp: store does not match optimizer");
    for (std::size_t i = 0; i < states_.size(); ++i) {
      auto& e = store.entries()[i];
      if (!e.tensor.has_grad()) throw UsageError("rmsprop_step: parameter '" + e.name + "' has no gradient");
      rmsprop_step(e.tensor, states_[i]);
    }
    ++steps_;
  }

  const RmsPropHyper& hyper() const { return hyper_; }
  std::size_t steps() const { return steps_; }
  std::vector<RmsPropState<T>>& states() { return states_; }
  const std::vector<RmsPropState<T>>& states() const { return states_; }

 private:
  RmsPropHyper hyper_;
  std::vector<RmsPropState<T>> states_;
  std::size_t steps_ = 0;
};

/// Clamps every entry of every tensor in `store` into [-c, c].
template <typename T>
void clip_weights(ParamStore<T>& store, double c) {
  if (!(c > 0.0)) throw UsageError("clip_weights: c must be positive");
  const T hi = static_cast<T>(c);
  for (auto& e : store.entries()) {
    for (auto& v : e.tensor.mutable_data()) v = std::clamp(v, -hi, hi);
  }
}

}  // namespace dualgan
