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
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/networks.hpp"
#include "dualgan/ops.hpp"
#include "dualgan/optim.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

enum class GeneratorKind { kUNet, kAffine };

/// Hyperparameters of the alternating critic/generator schedule and the four networks.
struct TrainConfig {
  double lambda_u = 100.0;
  double lambda_v = 100.0;
  double clip_c = 0.03;
  std::size_t batch_m = 1;
  std::size_t n_critic = 3;
  std::size_t total_generator_steps = 1000;

  std::size_t image_size = 32;
  std::size_t channels_u = 1;
  std::size_t channels_v = 1;

  GeneratorKind generator = GeneratorKind::kUNet;
  std::size_t depth = 3;
  std::size_t base_width = 16;
  double dropout_rate = 0.5;
  bool normalize = true;

  std::size_t disc_base_width = 16;
  std::size_t disc_n_down = 2;
  std::size_t disc_n_flat = 0;

  double lr = 5e-5;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  // Upper bounds keep a malformed config from turning into a huge allocation.
  static constexpr std::size_t kMaxImageSize = 4096;
  static constexpr std::size_t kMaxWidth = 1024;
  static constexpr std::size_t kMaxBatch = 1024;
  static constexpr std::size_t kMaxCritic = 1000;

  RmsPropHyper rmsprop() const { return {lr, rho, epsilon}; }

  UNetArch generator_arch(std::size_t in, std::size_t out) const {
    UNetArch a;
    a.in_channels = in;
    a.out_channels = out;
    a.depth = depth;
    a.base_width = base_width;
    a.dropout_rate = dropout_rate;
    a.normalize = normalize;
    return a;
  }

  PatchArch discriminator_arch(std::size_t in) const {
    PatchArch a;
    a.in_channels = in;
    a.base_width = disc_base_width;
    a.n_down = disc_n_down;
    a.n_flat = disc_n_flat;
    a.normalize = normalize;
    return a;
  }

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!finite_nonneg(lambda_u)) throw ConfigError("must be a finite value >= 0", "lambda_u");
    if (!finite_nonneg(lambda_v)) throw ConfigError("must be a finite value >= 0", "lambda_v");
    if (!(std::isfinite(clip_c) && clip_c > 0.0)) throw ConfigError("must be > 0", "clip_c");
    if (batch_m < 1 || batch_m > kMaxBatch) throw ConfigError("must lie in [1, 1024]", "batch_m");
    if (n_critic < 1 || n_critic > kMaxCritic) throw ConfigError("must lie in [1, 1000]", "n_critic");
    if (channels_u != 1 && channels_u != 3) throw ConfigError("must be 1 or 3", "channels_u");
    if (channels_v != 1 && channels_v != 3) throw ConfigError("must be 1 or 3", "channels_v");
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) throw ConfigError("must lie in [0, 1]", "dropout_rate");
    if (!(std::isfinite(lr) && lr > 0.0)) throw ConfigError("must be > 0", "lr");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("must lie in [0, 1)", "rho");
    if (!(std::isfinite(epsilon) && epsilon >= 0.0)) throw ConfigError("must be >= 0", "epsilon");
    if (image_size < 2 || image_size > kMaxImageSize || (image_size & (image_size - 1)) != 0) {
      throw ConfigError("must be a power of two in [2, 4096]", "image_size");
    }
    if (generator == GeneratorKind::kUNet) {
      if (depth < 1 || depth > 16) throw ConfigError("must lie in [1, 16]", "depth");
      if (image_size < (std::size_t{1} << depth)) {
        throw ConfigError("image_size " + std::to_string(image_size) + " is smaller than 2^depth", "image_size");
      }
      if (base_width < 1 || base_width > kMaxWidth) throw ConfigError("must lie in [1, 1024]", "base_width");
    } else if (channels_u != channels_v) {
      throw ConfigError("affine generator needs channels_u == channels_v", "generator");
    }
    if (disc_base_width < 1 || disc_base_width > kMaxWidth) throw ConfigError("must lie in [1, 1024]", "disc_base_width");
    if (disc_n_down > 16) throw ConfigError("must lie in [0, 16]", "disc_n_down");
    if (disc_n_flat > 16) throw ConfigError("must lie in [0, 16]", "disc_n_flat");
    const std::size_t rf = PatchDiscriminator<float>(discriminator_arch(1)).receptive_field();
    if (rf > image_size) {
      throw ConfigError("discriminator receptive field " + std::to_string(rf) + " exceeds image_size " +
                            std::to_string(image_size),
                        "disc_n_down");
    }
  }
};

enum class Domain { kU, kV };

/// A batch of images tagged with the domain it belongs to. The tag makes it a compile-time
/// error to feed a U-domain batch to the V-domain critic, and vice versa.
template <typename T, Domain D>
struct Images {
  Tensor<T> tensor;
};

template <typename T>
using ImagesU = Images<T, Domain::kU>;
template <typename T>
using ImagesV = Images<T, Domain::kV>;

/// G_A: U -> V, G_B: V -> U, D_A scores V-domain images, D_B scores U-domain images.
template <typename T>
class DualGanModel {
 public:
  explicit DualGanModel(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    g_a_ = make_generator(cfg_.channels_u, cfg_.channels_v);
    g_b_ = make_generator(cfg_.channels_v, cfg_.channels_u);
    d_a_ = PatchDiscriminator<T>(cfg_.discriminator_arch(cfg_.channels_v));
    d_b_ = PatchDiscriminator<T>(cfg_.discriminator_arch(cfg_.channels_u));

    const RngStream root(cfg_.seed);
    RngStream init_ga = root.split(10), init_gb = root.split(11), init_da = root.split(12), init_db = root.split(13);
    init_weights(g_a_->params(), init_ga);
    init_weights(g_b_->params(), init_gb);
    init_weights(d_a_.params(), init_da);
    init_weights(d_b_.params(), init_db);
    z_ = root.split(20);
    z_prime_ = root.split(21);

    const auto hyper = cfg_.rmsprop();
    opt_g_a_ = RmsProp<T>(g_a_->params(), hyper);
    opt_g_b_ = RmsProp<T>(g_b_->params(), hyper);
    opt_d_a_ = RmsProp<T>(d_a_.params(), hyper);
    opt_d_b_ = RmsProp<T>(d_b_.params(), hyper);
  }

  DualGanModel(DualGanModel&&) noexcept = default;
  DualGanModel& operator=(DualGanModel&&) noexcept = default;

  const TrainConfig& config() const { return cfg_; }

  Generator<T>& g_a() { return *g_a_; }
  Generator<T>& g_b() { return *g_b_; }
  const Generator<T>& g_a() const { return *g_a_; }
  const Generator<T>& g_b() const { return *g_b_; }
  PatchDiscriminator<T>& d_a() { return d_a_; }
  PatchDiscriminator<T>& d_b() { return d_b_; }
  const PatchDiscriminator<T>& d_a() const { return d_a_; }
  const PatchDiscriminator<T>& d_b() const { return d_b_; }

  RmsProp<T>& opt_g_a() { return opt_g_a_; }
  RmsProp<T>& opt_g_b() { return opt_g_b_; }
  RmsProp<T>& opt_d_a() { return opt_d_a_; }
  RmsProp<T>& opt_d_b() { return opt_d_b_; }

  /// Noise source of G_A (z) and of G_B (z').
  RngStream& z() { return z_; }
  RngStream& z_prime() { return z_prime_; }

  ImagesV<T> translate_a(const ImagesU<T>& u, bool noise_enabled = true) {
    return {g_a_->forward(u.tensor, z_, noise_enabled)};
  }
  ImagesU<T> translate_b(const ImagesV<T>& v, bool noise_enabled = true) {
    return {g_b_->forward(v.tensor, z_prime_, noise_enabled)};
  }
  Tensor<T> score_a(const ImagesV<T>& v) const { return d_a_.score(v.tensor); }
  Tensor<T> score_b(const ImagesU<T>& u) const { return d_b_.score(u.tensor); }

  /// The four parameter stores, keyed by network name, in a fixed order.
  std::vector<std::pair<std::string, ParamStore<T>*>> stores() {
    return {{"G_A", &g_a_->params()}, {"G_B", &g_b_->params()}, {"D_A", &d_a_.params()}, {"D_B", &d_b_.params()}};
  }
  std::vector<std::pair<std::string, RmsProp<T>*>> optimizers() {
    return {{"G_A", &opt_g_a_}, {"G_B", &opt_g_b_}, {"D_A", &opt_d_a_}, {"D_B", &opt_d_b_}};
  }

  std::size_t critic_updates() const { return critic_updates_; }
  std::size_t generator_updates() const { return generator_updates_; }
  void count_critic_update() { ++critic_updates_; }
  void count_generator_update() { ++generator_updates_; }
  void set_update_counts(std::size_t critic, std::size_t generator) {
    critic_updates_ = critic;
    generator_updates_ = generator;
  }

 private:
  std::unique_ptr<Generator<T>> make_generator(std::size_t in, std::size_t out) const {
    if (cfg_.generator == GeneratorKind::kAffine) return std::make_unique<AffineGenerator<T>>(in);
    return std::make_unique<UNetGenerator<T>>(cfg_.generator_arch(in, out));
  }

  TrainConfig cfg_;
  std::unique_ptr<Generator<T>> g_a_, g_b_;
  PatchDiscriminator<T> d_a_, d_b_;
  RmsProp<T> opt_g_a_, opt_g_b_, opt_d_a_, opt_d_b_;
  RngStream z_, z_prime_;
  std::size_t critic_updates_ = 0;
  std::size_t generator_updates_ = 0;
};

/// Critic loss D(fake) - D(real); minimized by the critic.
template <typename T>
Tensor<T> loss_discriminator(const Tensor<T>& d_fake, const Tensor<T>& d_real) {
  return sub(d_fake, d_real);
}

inline double loss_discriminator(double d_fake, double d_real) { return d_fake - d_real; }

/// Mean critic loss over (d_fake, d_real) pairs of a batch.
inline double loss_discriminator_batch(std::span<const std::pair<double, double>> scores) {
  if (scores.empty()) throw UsageError("loss_discriminator_batch: empty batch");
  double acc = 0.0;
  for (const auto& [fake, real] : scores) acc += loss_discriminator(fake, real);
  return acc / static_cast<double>(scores.size());
}

template <typename T>
struct GeneratorLoss {
  Tensor<T> total;
  T recon_u{}, recon_v{};
  T adv_u{};  // D_A(G_A(u, z))
  T adv_v{};  // D_B(G_B(v, z'))
  ImagesV<T> fake_v;
  ImagesU<T> fake_u;
  ImagesU<T> rec_u;
  ImagesV<T> rec_v;
};

/// lambda_u*|u - G_B(G_A(u))| + lambda_v*|v - G_A(G_B(v))| - D_A(G_A(u)) - D_B(G_B(v)).
/// Each translation is computed once and shared by its reconstruction and adversarial term.
template <typename T>
GeneratorLoss<T> loss_generators(DualGanModel<T>& model, const ImagesU<T>& u, const ImagesV<T>& v,
                                 const TrainConfig& cfg, bool noise_enabled = true) {
  GeneratorLoss<T> out;
  out.fake_v = model.translate_a(u, noise_enabled);
  out.rec_u = model.translate_b(out.fake_v, noise_enabled);
  out.fake_u = model.translate_b(v, noise_enabled);
  out.rec_v = model.translate_a(out.fake_u, noise_enabled);

  const Tensor<T> recon_u = l1_mean(u.tensor, out.rec_u.tensor);
  const Tensor<T> recon_v = l1_mean(v.tensor, out.rec_v.tensor);
  const Tensor<T> adv_u = model.score_a(out.fake_v);
  const Tensor<T> adv_v = model.score_b(out.fake_u);

  const Tensor<T> recon = add(mul_scalar(recon_u, static_cast<T>(cfg.lambda_u)),
                              mul_scalar(recon_v, static_cast<T>(cfg.lambda_v)));
  out.total = sub(sub(recon, adv_u), adv_v);
  out.recon_u = recon_u.item();
  out.recon_v = recon_v.item();
  out.adv_u = adv_u.item();
  out.adv_v = adv_v.item();
  return out;
}

struct CriticDiagnostics {
  double l_d_a = 0.0;
  double l_d_b = 0.0;
};

struct GeneratorDiagnostics {
  double l_g = 0.0;
  double recon_u = 0.0;
  double recon_v = 0.0;
  double adv_u = 0.0;
  double adv_v = 0.0;
};

/// One critic iteration: an RMSProp step on D_A against mean l^d_A, one on D_B against mean
/// l^d_B, then both critics are clipped into [-c, c]. Generators are evaluated without
/// recording so their parameters receive nothing.
template <typename T>
CriticDiagnostics critic_step(DualGanModel<T>& model, const ImagesU<T>& u, const ImagesV<T>& v,
                              const TrainConfig& cfg) {
  ImagesV<T> fake_v;
  ImagesU<T> fake_u;
  {
    NoGradGuard no_grad;
    fake_v = model.translate_a(u, true);
    fake_u = model.translate_b(v, true);
  }
  CriticDiagnostics diag;

  model.d_a().params().zero_grad();
  const Tensor<T> l_d_a = loss_discriminator(model.score_a(fake_v), model.score_a(v));
  l_d_a.backward();
  model.opt_d_a().step(model.d_a().params());
  diag.l_d_a = static_cast<double>(l_d_a.item());

  model.d_b().params().zero_grad();
  const Tensor<T> l_d_b = loss_discriminator(model.score_b(fake_u), model.score_b(u));
  l_d_b.backward();
  model.opt_d_b().step(model.d_b().params());
  diag.l_d_b = static_cast<double>(l_d_b.item());

  clip_weights(model.d_a().params(), cfg.clip_c);
  clip_weights(model.d_b().params(), cfg.clip_c);
  model.count_critic_update();
  return diag;
}

/// One generator iteration: RMSProp on theta_A and theta_B against mean l^g. Critics are
/// frozen for the duration and never clipped or updated here.
template <typename T>
GeneratorDiagnostics generator_step(DualGanModel<T>& model, const ImagesU<T>& u, const ImagesV<T>& v,
                                    const TrainConfig& cfg) {
  FreezeGuard<T> freeze_a(model.d_a().params());
  FreezeGuard<T> freeze_b(model.d_b().params());
  model.g_a().params().zero_grad();
  model.g_b().params().zero_grad();
  const GeneratorLoss<T> loss = loss_generators(model, u, v, cfg, true);
  loss.total.backward();
  model.opt_g_a().step(model.g_a().params());
  model.opt_g_b().step(model.g_b().params());
  model.count_generator_update();
  return {static_cast<double>(loss.total.item()), static_cast<double>(loss.recon_u),
          static_cast<double>(loss.recon_v), static_cast<double>(loss.adv_u), static_cast<double>(loss.adv_v)};
}

enum class Phase { kCritic, kGenerator };

/// One line of the loss history. Absent fields are not applicable to the phase.
struct StepRecord {
  std::size_t step = 0;  // 1-based outer iteration
  Phase phase = Phase::kCritic;
  std::optional<double> l_d_a, l_d_b, l_g, recon_u, recon_v;
};

/// Tab-separated: step, phase, l_d_A, l_d_B, l_g, recon_u, recon_v; "-" marks an absent field.
inline std::string format_log_line(const StepRecord& r) {
  auto field = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", *v);
    return std::string(buf);
  };
  return std::to_string(r.step) + '\t' + (r.phase == Phase::kCritic ? "critic" : "gen") + '\t' + field(r.l_d_a) +
         '\t' + field(r.l_d_b) + '\t' + field(r.l_g) + '\t' + field(r.recon_u) + '\t' + field(r.recon_v);
}

inline constexpr const char* kLogHeader = "step\tphase\tl_d_A\tl_d_B\tl_g\trecon_u\trecon_v";

/// Anything that hands out unpaired (U, V) batches of a requested size.
template <typename S, typename T>
concept BatchSource = requires(S& s, std::size_t m) {
  { s.template sample<T>(m) } -> std::same_as<std::pair<ImagesU<T>, ImagesV<T>>>;
};

template <typename T>
struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_record;
  /// Called with the outer iteration index after every `checkpoint_every` iterations and
  /// after the last one.
  std::function<void(std::size_t)> on_checkpoint;
  std::size_t checkpoint_every = 0;
};

/// Alternating schedule: per outer iteration, n_critic critic steps on fresh batches, then one
/// generator step on a fresh batch. Runs a fixed total_generator_steps.
template <typename T, typename Source>
  requires BatchSource<Source, T>
std::vector<StepRecord> train(DualGanModel<T>& model, Source& source, const TrainConfig& cfg,
                              const TrainCallbacks<T>& callbacks = {}) {
  cfg.validate();
  std::vector<StepRecord> history;
  history.reserve(cfg.total_generator_steps * (cfg.n_critic + 1));
  const std::size_t start = model.generator_updates();
  for (std::size_t k = start + 1; k <= start + cfg.total_generator_steps; ++k) {
    for (std::size_t t = 0; t < cfg.n_critic; ++t) {
      const auto [u, v] = source.template sample<T>(cfg.batch_m);
      const CriticDiagnostics d = critic_step(model, u, v, cfg);
      StepRecord r{k, Phase::kCritic, d.l_d_a, d.l_d_b, std::nullopt, std::nullopt, std::nullopt};
      history.push_back(r);
      if (callbacks.on_record) callbacks.on_record(r);
    }
    const auto [u, v] = source.template sample<T>(cfg.batch_m);
    const GeneratorDiagnostics g = generator_step(model, u, v, cfg);
    StepRecord r{k, Phase::kGenerator, std::nullopt, std::nullopt, g.l_g, g.recon_u, g.recon_v};
    history.push_back(r);
    if (callbacks.on_record) callbacks.on_record(r);

    const bool last = k == start + cfg.total_generator_steps;
    const bool scheduled = callbacks.checkpoint_every > 0 && k % callbacks.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (scheduled || last)) callbacks.on_checkpoint(k);
  }
  return history;
}

}  // namespace dualgan
