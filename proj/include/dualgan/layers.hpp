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

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/ops.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// What a parameter is, which decides how it is initialized.
enum class ParamRole { kConvWeight, kBias, kNormScale, kNormShift };

/// Ordered, uniquely named set of trainable tensors belonging to one network.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamRole role;
    Tensor<T> tensor;
  };

  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Copies are deep: the new store owns fresh tensors with the same values.
  ParamStore(const ParamStore& other) : index_(other.index_) {
    entries_.reserve(other.entries_.size());
    for (const auto& e : other.entries_) {
      const auto& t = e.tensor;
      entries_.push_back({e.name, e.role,
                          Tensor<T>::from(t.shape(), std::vector<T>(t.data().begin(), t.data().end()),
                                          t.requires_grad())});
    }
  }
  ParamStore& operator=(const ParamStore& other) {
    if (this != &other) *this = ParamStore(other);
    return *this;
  }

  Tensor<T>& add(const std::string& name, ParamRole role, Shape shape) {
    if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, role, Tensor<T>::zeros(std::move(shape), true)});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
  }
  const Tensor<T>& at(const std::string& name) const { return const_cast<ParamStore*>(this)->at(name); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Freezing drops requires_grad so backward skips the weight-gradient work.
  void set_frozen(bool frozen) {
    for (auto& e : entries_) e.tensor.set_requires_grad(!frozen);
  }

  /// Copy of every value, in entry order.
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    return out;
  }

  T max_abs() const {
    T m = T(0);
    for (const auto& e : entries_)
      for (const T v : e.tensor.data()) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Restores requires_grad on scope exit.
template <typename T>
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamStore<T>& store) : store_(store) { store_.set_frozen(true); }
  ~FreezeGuard() { store_.set_frozen(false); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamStore<T>& store_;
};

inline constexpr double kInitStddev = 0.02;

/// Conv weights ~ N(0, 0.02); biases and shifts 0; normalization scales 1.
template <typename T>
void init_weights(ParamStore<T>& store, RngStream& rng) {
  for (auto& e : store.entries()) {
    auto data = e.tensor.mutable_data();
    switch (e.role) {
      case ParamRole::kConvWeight:
        for (auto& v : data) v = static_cast<T>(kInitStddev * rng.normal());
        break;
      case ParamRole::kBias:
      case ParamRole::kNormShift:
        std::fill(data.begin(), data.end(), T(0));
        break;
      case ParamRole::kNormScale:
        std::fill(data.begin(), data.end(), T(1));
        break;
    }
  }
}

inline constexpr double kNormEpsilon = 1e-5;

/// Per-channel standardization over the batch and spatial extent followed by an affine
/// scale/shift. With batch size 1 this is instance normalization.
template <typename T>
Tensor<T> normalize_forward(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
  detail::require_rank(x, 4, "normalize_forward", "input");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (scale.numel() != c || shift.numel() != c) {
    throw DimensionError("normalize_forward: scale/shift must have " + std::to_string(c) + " entries");
  }
  const std::size_t count = b * hw;
  if (count == 0) throw DimensionError("normalize_forward: empty channel");

  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(c);
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T acc = T(0);
    for (std::size_t n = 0; n < b; ++n) {
      const T* p = in.data() + (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    }
    const T mu = acc / static_cast<T>(count);
    T var = T(0);
    for (std::size_t n = 0; n < b; ++n) {
      const T* p = in.data() + (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mu) * (p[i] - mu);
    }
    var /= static_cast<T>(count);
    inv_std[ch] = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
    const T g = scale[ch], s = shift[ch];
    for (std::size_t n = 0; n < b; ++n) {
      const std::size_t off = (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[off + i] = (in[off + i] - mu) * inv_std[ch];
        out[off + i] = g * xhat[off + i] + s;
      }
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), scale.node(), shift.node()},
      [b, c, hw, count, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pscale = *self.parents[1];
        auto& pshift = *self.parents[2];
        const T* dy = self.grad.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (std::size_t n = 0; n < b; ++n) {
            const std::size_t off = (n * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat[off + i];
            }
          }
          if (pscale.requires_grad) pscale.grad_slot()[ch] += sum_dy_xhat;
          if (pshift.requires_grad) pshift.grad_slot()[ch] += sum_dy;
          if (px.requires_grad) {
            auto gx = px.grad_slot();
            const T k = pscale.data[ch] * inv_std[ch] / static_cast<T>(count);
            for (std::size_t n = 0; n < b; ++n) {
              const std::size_t off = (n * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                gx[off + i] +=
                    k * (static_cast<T>(count) * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
              }
            }
          }
        }
      },
      "normalize_forward");
}

enum class LayerKind { kDownBlock, kUpBlock, kFinalConv, kPatchBlock };

/// One convolutional block: conv (or transposed conv for up blocks), optional normalization,
/// optional dropout, activation.
struct LayerSpec {
  LayerKind kind = LayerKind::kDownBlock;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t pad = 1;
  bool normalize = false;
  double dropout_rate = 0.0;
  Activation act = Activation::leaky_relu();
};

/// Registers the parameters of `spec` under `prefix` in `store`.
template <typename T>
void register_layer(ParamStore<T>& store, const std::string& prefix, const LayerSpec& spec) {
  if (spec.kind == LayerKind::kUpBlock || spec.kind == LayerKind::kFinalConv) {
    store.add(prefix + ".weight", ParamRole::kConvWeight,
              {spec.in_channels, spec.out_channels, spec.kernel, spec.kernel});
  } else {
    store.add(prefix + ".weight", ParamRole::kConvWeight,
              {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
  }
  if (spec.normalize) {
    store.add(prefix + ".norm_scale", ParamRole::kNormScale, {spec.out_channels});
    store.add(prefix + ".norm_shift", ParamRole::kNormShift, {spec.out_channels});
  } else {
    store.add(prefix + ".bias", ParamRole::kBias, {spec.out_channels});
  }
}

/// Forward through one block whose parameters live in `store` under `prefix`.
template <typename T>
Tensor<T> apply_layer(const ParamStore<T>& store, const std::string& prefix, const LayerSpec& spec,
                      const Tensor<T>& x, RngStream* rng, bool noise_enabled) {
  const auto& w = store.at(prefix + ".weight");
  Tensor<T> y = (spec.kind == LayerKind::kUpBlock || spec.kind == LayerKind::kFinalConv)
                    ? conv2d_transpose(x, w, spec.stride, spec.pad)
                    : conv2d(x, w, spec.stride, spec.pad);
  if (spec.normalize) {
    y = normalize_forward(y, store.at(prefix + ".norm_scale"), store.at(prefix + ".norm_shift"));
  } else {
    y = add_channel_bias(y, store.at(prefix + ".bias"));
  }
  if (spec.dropout_rate > 0.0) {
    if (rng == nullptr) throw UsageError("layer '" + prefix + "' has dropout but no rng was supplied");
    y = dropout(y, spec.dropout_rate, *rng, noise_enabled);
  }
  return activation(y, spec.act);
}

}  // namespace dualgan
