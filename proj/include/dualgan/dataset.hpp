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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/image_io.hpp"
#include "dualgan/model.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// Epoch-based sampler over n items: a fresh seeded permutation per epoch, consumed in order.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, RngStream rng) : rng_(rng), order_(n) {
    if (n == 0) throw UsageError("EpochSampler: empty domain");
    reshuffle();
  }

  std::size_t next() {
    if (cursor_ == order_.size()) reshuffle();
    return order_[cursor_++];
  }

  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    cursor_ = 0;
    ++epoch_;
  }

  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Two independent image collections. Each domain has its own seeded permutation stream, so
/// no positional pairing between U and V survives sampling.
class UnpairedDataset {
 public:
  UnpairedDataset(std::vector<ImageRecord> domain_u, std::vector<ImageRecord> domain_v, std::size_t image_size,
                  std::size_t channels_u, std::size_t channels_v, std::uint64_t seed)
      : domain_u_(std::move(domain_u)),
        domain_v_(std::move(domain_v)),
        image_size_(image_size),
        channels_u_(channels_u),
        channels_v_(channels_v),
        sampler_u_(nonempty(domain_u_, "domain_u"), RngStream(seed, 101)),
        sampler_v_(nonempty(domain_v_, "domain_v"), RngStream(seed, 202)) {
    cache_u_ = prepare(domain_u_, channels_u_);
    cache_v_ = prepare(domain_v_, channels_v_);
  }

  std::size_t size_u() const { return domain_u_.size(); }
  std::size_t size_v() const { return domain_v_.size(); }
  std::size_t image_size() const { return image_size_; }
  std::size_t channels_u() const { return channels_u_; }
  std::size_t channels_v() const { return channels_v_; }
  const std::vector<ImageRecord>& domain_u() const { return domain_u_; }
  const std::vector<ImageRecord>& domain_v() const { return domain_v_; }

  /// Preprocessed batch of the given U / V indices.
  template <typename T>
  ImagesU<T> batch_u(const std::vector<std::size_t>& idx) const {
    return {stack<T>(cache_u_, idx, channels_u_)};
  }
  template <typename T>
  ImagesV<T> batch_v(const std::vector<std::size_t>& idx) const {
    return {stack<T>(cache_v_, idx, channels_v_)};
  }

  /// Next m indices from each domain's stream; an exhausted epoch reshuffles.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> next_indices(std::size_t m) {
    if (m < 1) throw UsageError("batch size must be >= 1");
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < m; ++i) out.first.push_back(sampler_u_.next());
    for (std::size_t i = 0; i < m; ++i) out.second.push_back(sampler_v_.next());
    return out;
  }

  template <typename T>
  std::pair<ImagesU<T>, ImagesV<T>> sample(std::size_t m) {
    const auto [iu, iv] = next_indices(m);
    return {batch_u<T>(iu), batch_v<T>(iv)};
  }

 private:
  static std::size_t nonempty(const std::vector<ImageRecord>& d, const char* name) {
    if (d.empty()) throw IngestionError(std::string(name) + " is empty");
    return d.size();
  }

  std::vector<std::vector<double>> prepare(const std::vector<ImageRecord>& recs, std::size_t channels) const {
    std::vector<std::vector<double>> cache;
    cache.reserve(recs.size());
    for (const auto& r : recs) {
      const auto t = preprocess<double>(convert_channels(r, channels), image_size_);
      cache.emplace_back(t.data().begin(), t.data().end());
    }
    return cache;
  }

  template <typename T>
  Tensor<T> stack(const std::vector<std::vector<double>>& cache, const std::vector<std::size_t>& idx,
                  std::size_t channels) const {
    std::vector<T> data;
    data.reserve(idx.size() * channels * image_size_ * image_size_);
    for (const std::size_t i : idx)
      for (const double v : cache.at(i)) data.push_back(static_cast<T>(v));
    return Tensor<T>::from({idx.size(), channels, image_size_, image_size_}, std::move(data));
  }

  std::vector<ImageRecord> domain_u_, domain_v_;
  std::size_t image_size_, channels_u_, channels_v_;
  EpochSampler sampler_u_, sampler_v_;
  std::vector<std::vector<double>> cache_u_, cache_v_;
};

template <typename T>
std::pair<ImagesU<T>, ImagesV<T>> sample_unpaired_batch(UnpairedDataset& ds, std::size_t m) {
  return ds.sample<T>(m);
}

enum class SyntheticKind { kInvert, kChannelSwap };

inline const char* to_string(SyntheticKind k) { return k == SyntheticKind::kInvert ? "invert" : "channel_swap"; }

/// The analytic U -> V map of a synthetic task on [-1, 1] tensors [b,c,h,w]. Both maps are
/// involutions: invert negates, channel_swap reverses channel order.
template <typename T>
Tensor<T> apply_synthetic_map(SyntheticKind kind, const Tensor<T>& x) {
  detail::require_rank(x, 4, "synthetic map", "input");
  std::vector<T> out(x.numel());
  if (kind == SyntheticKind::kInvert) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x[i];
  } else {
    const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[(n * c + ch) * hw + i] = x[(n * c + (c - 1 - ch)) * hw + i];
  }
  return Tensor<T>::from(x.shape(), std::move(out));
}

/// Same map on 8-bit records: invert is p -> 255 - p.
inline ImageRecord apply_synthetic_map(SyntheticKind kind, const ImageRecord& rec) {
  ImageRecord out = rec;
  for (std::size_t c = 0; c < rec.channels; ++c)
    for (std::size_t y = 0; y < rec.height; ++y)
      for (std::size_t x = 0; x < rec.width; ++x) {
        out.at(c, y, x) = kind == SyntheticKind::kInvert ? static_cast<std::uint8_t>(255 - rec.at(c, y, x))
                                                         : rec.at(rec.channels - 1 - c, y, x);
      }
  return out;
}

/// Soft Gaussian blobs on a black background. Blob `id` depends only on (seed, id).
inline ImageRecord make_blob_image(SyntheticKind kind, std::size_t id, std::size_t size, std::uint64_t seed) {
  RngStream rng = RngStream(seed, 303).split(id);
  const std::size_t channels = kind == SyntheticKind::kInvert ? 1 : 3;
  std::vector<double> field(channels * size * size, 0.0);
  const std::size_t n_blobs = 1 + rng.below(3);
  for (std::size_t k = 0; k < n_blobs; ++k) {
    const double cy = rng.uniform() * double(size), cx = rng.uniform() * double(size);
    const double sigma = double(size) * (1.0 / 12.0 + rng.uniform() * (1.0 / 5.0 - 1.0 / 12.0));
    const double amp = 0.6 + 0.4 * rng.uniform();
    // channel_swap blobs are red-dominant so the two domains differ in color statistics
    const double tint[3] = {1.0, 0.5 * rng.uniform(), 0.3 * rng.uniform()};
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double d2 = (double(y) + 0.5 - cy) * (double(y) + 0.5 - cy) + (double(x) + 0.5 - cx) * (double(x) + 0.5 - cx);
        const double g = amp * std::exp(-d2 / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < channels; ++c) field[(c * size + y) * size + x] += g * (channels == 1 ? 1.0 : tint[c]);
      }
  }
  ImageRecord rec = blank_image(channels, size, size);
  for (std::size_t i = 0; i < field.size(); ++i) {
    rec.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(field[i], 0.0, 1.0) * 255.0));
  }
  rec.source = std::string("synthetic:") + to_string(kind) + ":blob" + std::to_string(id);
  return rec;
}

/// Synthetic translation task with a known answer. U holds blobs [0, n), V holds T(blob) for
/// blobs [n, 2n), held-out U images use blobs [2n, 2n + n_heldout). The blob id in each
/// record's source tag certifies disjointness.
struct SyntheticTask {
  SyntheticKind kind;
  std::vector<ImageRecord> domain_u;
  std::vector<ImageRecord> domain_v;
  std::vector<ImageRecord> heldout_u;

  std::size_t channels() const { return kind == SyntheticKind::kInvert ? 1 : 3; }

  UnpairedDataset dataset(std::size_t image_size, std::uint64_t seed) const {
    return UnpairedDataset(domain_u, domain_v, image_size, channels(), channels(), seed);
  }
};

inline SyntheticTask make_synthetic_pairtask(SyntheticKind kind, std::size_t n, std::size_t size, std::uint64_t seed,
                                             std::size_t n_heldout = 32) {
  if (n < 2) throw UsageError("synthetic task needs n >= 2");
  SyntheticTask task{kind, {}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) task.domain_u.push_back(make_blob_image(kind, i, size, seed));
  for (std::size_t i = n; i < 2 * n; ++i) {
    ImageRecord v = apply_synthetic_map(kind, make_blob_image(kind, i, size, seed));
    v.source += ":mapped";
    task.domain_v.push_back(std::move(v));
  }
  for (std::size_t i = 2 * n; i < 2 * n + n_heldout; ++i) task.heldout_u.push_back(make_blob_image(kind, i, size, seed));
  return task;
}

}  // namespace dualgan
