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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/model.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

// Container layout, all integers little-endian:
//   "DGAN" | u32 version | u32 config_len | config_len bytes of JSON | u64 global_step |
//   u32 tensor_count | tensor_count x ( u32 name_len | name | u32 rank | rank x u32 dim |
//   prod(dims) x f32 )
inline constexpr char kCheckpointMagic[4] = {'D', 'G', 'A', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kMaxRank = 8;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

enum class CheckpointErrorKind { kIo, kBadMagic, kUnsupportedVersion, kTruncated, kMalformed };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& msg, std::string tensor = {})
      : std::runtime_error(msg), kind_(kind), tensor_(std::move(tensor)) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }
  /// Tensor being read when the error occurred; empty for header errors.
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  CheckpointErrorKind kind_;
  std::string tensor_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::uint64_t global_step = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void set_context(std::string tensor) { context_ = std::move(tensor); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::uint64_t n) const {
    if (remaining() < n) {
      throw CheckpointError(CheckpointErrorKind::kTruncated,
                            context_.empty() ? "checkpoint truncated in header"
                                             : "checkpoint truncated while reading tensor '" + context_ + "'",
                            context_);
    }
  }

 private:
  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(ckpt.version);
  w.u32(static_cast<std::uint32_t>(ckpt.config_json.size()));
  w.bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.u64(ckpt.global_step);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    std::size_t n = 1;
    for (const auto d : t.dims) n *= d;
    if (n != t.values.size()) throw UsageError("checkpoint tensor '" + t.name + "' has inconsistent dims");
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (const auto d : t.dims) w.u32(d);
    for (const float v : t.values) w.f32(v);
  }
  return w.take();
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a checkpoint: bad magic bytes");
  }
  detail::ByteReader r(bytes);
  r.str(4);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kUnsupportedVersion,
                          "unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.config_json = r.str(r.u32());
  ckpt.global_step = r.u64();
  const std::uint32_t count = r.u32();
  constexpr std::uint64_t kMaxCount = std::numeric_limits<std::uint64_t>::max();
  for (std::uint32_t i = 0; i < count; ++i) {
    r.set_context("#" + std::to_string(i));
    NamedTensor t;
    t.name = r.str(r.u32());
    r.set_context(t.name);
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, "tensor '" + t.name + "' has rank " + std::to_string(rank),
                            t.name);
    }
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      const std::uint64_t d = t.dims.back();
      n = (d != 0 && n > kMaxCount / d) ? kMaxCount : n * d;
    }
    r.need(n > kMaxCount / 4 ? kMaxCount : n * 4);
    t.values.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) t.values.push_back(r.f32());
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::kMalformed, "trailing bytes after last tensor");
  return ckpt;
}

/// Writes to a sibling temp file, then renames over `path`.
inline void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointErrorKind::kIo, "cannot rename to " + path.string() + ": " + ec.message());
}

inline Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

inline constexpr const char* kOptimizerPrefix = "rmsprop/";

/// Parameters of all four networks as "<net>/<param>", optionally followed by the RMSProp
/// accumulators as "rmsprop/<net>/<param>". Values are stored as 32-bit floats.
template <typename T>
Checkpoint make_checkpoint(DualGanModel<T>& model, std::string config_json, bool include_optimizer = true) {
  Checkpoint ckpt;
  ckpt.config_json = std::move(config_json);
  ckpt.global_step = model.generator_updates();
  auto dims_of = [](const Shape& s) {
    std::vector<std::uint32_t> d;
    for (const auto x : s) d.push_back(static_cast<std::uint32_t>(x));
    return d;
  };
  for (auto& [net, store] : model.stores()) {
    for (const auto& e : store->entries()) {
      ckpt.tensors.push_back({net + "/" + e.name, dims_of(e.tensor.shape()),
                              std::vector<float>(e.tensor.data().begin(), e.tensor.data().end())});
    }
  }
  if (include_optimizer) {
    auto stores = model.stores();
    auto opts = model.optimizers();
    for (std::size_t s = 0; s < stores.size(); ++s) {
      const auto& entries = stores[s].second->entries();
      const auto& states = opts[s].second->states();
      for (std::size_t i = 0; i < entries.size(); ++i) {
        ckpt.tensors.push_back({kOptimizerPrefix + stores[s].first + "/" + entries[i].name,
                                dims_of(entries[i].tensor.shape()),
                                std::vector<float>(states[i].accum.begin(), states[i].accum.end())});
      }
    }
  }
  return ckpt;
}

/// Copies every stored tensor into a model built from the same configuration.
template <typename T>
void restore_checkpoint(DualGanModel<T>& model, const Checkpoint& ckpt) {
  auto stores = model.stores();
  auto opts = model.optimizers();
  for (std::size_t s = 0; s < stores.size(); ++s) {
    auto& entries = stores[s].second->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      const std::string name = stores[s].first + "/" + e.name;
      const NamedTensor* t = ckpt.find(name);
      if (t == nullptr) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint lacks tensor '" + name + "'", name);
      if (t->values.size() != e.tensor.numel() || t->dims.size() != e.tensor.rank()) {
        throw CheckpointError(CheckpointErrorKind::kMalformed, "shape mismatch for tensor '" + name + "'", name);
      }
      auto data = e.tensor.mutable_data();
      for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<T>(t->values[k]);
      if (const NamedTensor* acc = ckpt.find(kOptimizerPrefix + name)) {
        if (acc->values.size() != e.tensor.numel()) {
          throw CheckpointError(CheckpointErrorKind::kMalformed, "shape mismatch for accumulator of '" + name + "'", name);
        }
        auto& state = opts[s].second->states()[i];
        state.accum.assign(acc->values.begin(), acc->values.end());
      }
    }
  }
  model.set_update_counts(ckpt.global_step * model.config().n_critic, ckpt.global_step);
}

}  // namespace dualgan
