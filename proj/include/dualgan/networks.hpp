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
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/ops.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// Image-to-image network. Noise enters only through dropout masks drawn from `rng`.
template <typename T>
class Generator {
 public:
  virtual ~Generator() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, RngStream& rng, bool noise_enabled) const = 0;
  virtual std::size_t in_channels() const = 0;
  virtual std::size_t out_channels() const = 0;

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 protected:
  ParamStore<T> params_;
};

struct UNetArch {
  std::size_t in_channels = 3;
  std::size_t out_channels = 3;
  std::size_t depth = 4;       // number of stride-2 down blocks (= number of up steps)
  std::size_t base_width = 32;  // channels after the first down block
  std::size_t max_width_mult = 8;
  double dropout_rate = 0.5;
  bool normalize = true;
};

/// U-shaped encoder/decoder. Decoder step i consumes the skip from the mirrored encoder
/// block; the first half of the decoder's up blocks carry dropout; output is tanh-bounded.
template <typename T>
class UNetGenerator final : public Generator<T> {
 public:
  explicit UNetGenerator(UNetArch arch) : arch_(arch) {
    if (arch_.depth < 1) throw ConfigError("generator depth must be >= 1", "depth");
    if (arch_.base_width < 1) throw ConfigError("generator width must be >= 1", "base_width");
    const std::size_t d = arch_.depth;
    for (std::size_t i = 0; i < d; ++i) {
      LayerSpec s;
      s.kind = LayerKind::kDownBlock;
      s.in_channels = i == 0 ? arch_.in_channels : width(i - 1);
      s.out_channels = width(i);
      // outermost and innermost blocks skip normalization
      s.normalize = arch_.normalize && i > 0 && i + 1 < d;
      s.act = Activation::leaky_relu(0.2);
      down_.push_back(s);
    }
    const std::size_t n_up = d - 1;
    const std::size_t n_dropout = (n_up + 1) / 2;
    for (std::size_t j = 0; j < n_up; ++j) {
      const std::size_t skip = d - 1 - j;  // encoder block feeding this step
      LayerSpec s;
      s.kind = LayerKind::kUpBlock;
      s.in_channels = j == 0 ? width(skip) : 2 * width(skip);
      s.out_channels = width(skip - 1);
      s.normalize = arch_.normalize;
      s.dropout_rate = j < n_dropout ? arch_.dropout_rate : 0.0;
      s.act = Activation::relu();
      up_.push_back(s);
    }
    final_.kind = LayerKind::kFinalConv;
    final_.in_channels = d == 1 ? width(0) : 2 * width(0);
    final_.out_channels = arch_.out_channels;
    final_.act = Activation::tanh();

    for (std::size_t i = 0; i < down_.size(); ++i) register_layer(this->params_, "down" + std::to_string(i), down_[i]);
    for (std::size_t j = 0; j < up_.size(); ++j) register_layer(this->params_, "up" + std::to_string(j), up_[j]);
    register_layer(this->params_, "final", final_);
  }

  Tensor<T> forward(const Tensor<T>& x, RngStream& rng, bool noise_enabled) const override {
    detail::require_rank(x, 4, "generator", "input");
    if (x.dim(1) != arch_.in_channels) {
      throw DimensionError("generator expects " + std::to_string(arch_.in_channels) + " channels, got " +
                           to_string(x.shape()));
    }
    const std::size_t factor = std::size_t{1} << arch_.depth;
    if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
      throw ConfigError("image size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                            " is not divisible by 2^depth = " + std::to_string(factor),
                        "image_size");
    }
    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (std::size_t i = 0; i < down_.size(); ++i) {
      h = apply_layer(this->params_, "down" + std::to_string(i), down_[i], h, &rng, noise_enabled);
      skips.push_back(h);
    }
    for (std::size_t j = 0; j < up_.size(); ++j) {
      if (j > 0) h = concat_channels(h, skips[arch_.depth - 1 - j]);
      h = apply_layer(this->params_, "up" + std::to_string(j), up_[j], h, &rng, noise_enabled);
    }
    if (arch_.depth > 1) h = concat_channels(h, skips[0]);
    return apply_layer(this->params_, "final", final_, h, &rng, noise_enabled);
  }

  std::size_t in_channels() const override { return arch_.in_channels; }
  std::size_t out_channels() const override { return arch_.out_channels; }

  const UNetArch& arch() const { return arch_; }
  const std::vector<LayerSpec>& down_blocks() const { return down_; }
  const std::vector<LayerSpec>& up_blocks() const { return up_; }
  const LayerSpec& final_layer() const { return final_; }

 private:
  std::size_t width(std::size_t level) const {
    return arch_.base_width * std::min<std::size_t>(std::size_t{1} << level, arch_.max_width_mult);
  }

  UNetArch arch_;
  std::vector<LayerSpec> down_;
  std::vector<LayerSpec> up_;
  LayerSpec final_;
};

/// Per-channel affine map y = scale*x + shift. Test stand-in for a generator: identity,
/// negation and constant maps are all expressible exactly.
template <typename T>
class AffineGenerator final : public Generator<T> {
 public:
  explicit AffineGenerator(std::size_t channels) : channels_(channels) {
    this->params_.add("scale", ParamRole::kNormScale, {channels});
    this->params_.add("shift", ParamRole::kNormShift, {channels});
  }

  void set(T scale, T shift) {
    for (auto& v : this->params_.at("scale").mutable_data()) v = scale;
    for (auto& v : this->params_.at("shift").mutable_data()) v = shift;
  }

  Tensor<T> forward(const Tensor<T>& x, RngStream&, bool) const override {
    detail::require_rank(x, 4, "affine generator", "input");
    if (x.dim(1) != channels_) throw DimensionError("affine generator channel mismatch: " + to_string(x.shape()));
    const auto& scale = this->params_.at("scale");
    const auto& shift = this->params_.at("shift");
    const std::size_t b = x.dim(0), c = channels_, hw = x.dim(2) * x.dim(3);
    std::vector<T> out(x.numel());
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t k = (n * c + ch) * hw + i;
          out[k] = scale[ch] * x[k] + shift[ch];
        }
    return detail::make_result<T>(
        x.shape(), std::move(out), {x.node(), scale.node(), shift.node()},
        [b, c, hw](detail::Node<T>& self) {
          auto& px = *self.parents[0];
          auto& ps = *self.parents[1];
          auto& pt = *self.parents[2];
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t k = (n * c + ch) * hw + i;
                const T g = self.grad[k];
                if (px.requires_grad) px.grad_slot()[k] += g * ps.data[ch];
                if (ps.requires_grad) ps.grad_slot()[ch] += g * px.data[k];
                if (pt.requires_grad) pt.grad_slot()[ch] += g;
              }
        },
        "affine generator");
  }

  std::size_t in_channels() const override { return channels_; }
  std::size_t out_channels() const override { return channels_; }

 private:
  std::size_t channels_;
};

struct PatchArch {
  std::size_t in_channels = 3;
  std::size_t base_width = 64;
  std::size_t n_down = 3;  // stride-2 blocks
  std::size_t n_flat = 1;  // stride-1 blocks before the scoring conv
  std::size_t kernel = 4;
  std::size_t score_kernel = 4;
  std::size_t max_width_mult = 8;
  bool normalize = true;
};

/// Receptive field of a conv stack given (kernel, stride) per layer.
inline std::size_t receptive_field(const std::vector<std::pair<std::size_t, std::size_t>>& layers) {
  std::size_t rf = 1, jump = 1;
  for (const auto& [k, s] : layers) {
    rf += (k - 1) * jump;
    jump *= s;
  }
  return rf;
}

/// Markovian patch critic: a fully convolutional stack whose 1-channel response map is
/// averaged into one unbounded score.
template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  explicit PatchDiscriminator(PatchArch arch) : arch_(arch) {
    const std::size_t pad = (arch_.kernel - 1) / 2;
    std::size_t in = arch_.in_channels;
    for (std::size_t i = 0; i < arch_.n_down + arch_.n_flat; ++i) {
      LayerSpec s;
      s.kind = LayerKind::kPatchBlock;
      s.in_channels = in;
      s.out_channels = arch_.base_width * std::min<std::size_t>(std::size_t{1} << i, arch_.max_width_mult);
      s.kernel = arch_.kernel;
      s.stride = i < arch_.n_down ? 2 : 1;
      s.pad = pad;
      s.normalize = arch_.normalize && i > 0;
      s.act = Activation::leaky_relu(0.2);
      blocks_.push_back(s);
      in = s.out_channels;
    }
    score_.kind = LayerKind::kPatchBlock;
    score_.in_channels = in;
    score_.out_channels = 1;
    score_.kernel = arch_.score_kernel;
    score_.stride = 1;
    score_.pad = (arch_.score_kernel - 1) / 2;
    score_.act = Activation::identity();  // Wasserstein critic: no sigmoid

    for (std::size_t i = 0; i < blocks_.size(); ++i) register_layer(params_, "block" + std::to_string(i), blocks_[i]);
    register_layer(params_, "score", score_);
  }

  /// Per-patch scores [b,1,h',w'].
  Tensor<T> response_map(const Tensor<T>& x) const {
    detail::require_rank(x, 4, "discriminator", "input");
    if (x.dim(1) != arch_.in_channels) {
      throw DimensionError("discriminator expects " + std::to_string(arch_.in_channels) + " channels, got " +
                           to_string(x.shape()));
    }
    const std::size_t rf = receptive_field();
    if (x.dim(2) < rf || x.dim(3) < rf) {
      throw ConfigError("input " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                            " is smaller than the discriminator receptive field " + std::to_string(rf),
                        "image_size");
    }
    Tensor<T> h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      h = apply_layer(params_, "block" + std::to_string(i), blocks_[i], h, nullptr, false);
    }
    return apply_layer(params_, "score", score_, h, nullptr, false);
  }

  /// Mean of the response map over all patches and batch entries.
  Tensor<T> score(const Tensor<T>& x) const { return mean(response_map(x)); }

  std::size_t receptive_field() const {
    std::vector<std::pair<std::size_t, std::size_t>> layers;
    for (const auto& b : blocks_) layers.emplace_back(b.kernel, b.stride);
    layers.emplace_back(score_.kernel, score_.stride);
    return dualgan::receptive_field(layers);
  }

  std::size_t in_channels() const { return arch_.in_channels; }
  const PatchArch& arch() const { return arch_; }
  const std::vector<LayerSpec>& blocks() const { return blocks_; }
  const LayerSpec& score_layer() const { return score_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 private:
  PatchArch arch_;
  std::vector<LayerSpec> blocks_;
  LayerSpec score_;
  ParamStore<T> params_;
};

}  // namespace dualgan
