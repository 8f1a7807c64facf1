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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dualgan/dataset.hpp"
#include "dualgan/errors.hpp"
#include "dualgan/image_io.hpp"
#include "dualgan/model.hpp"

namespace dualgan {

enum class Preset { kPaper256, kDesk64, kDesk32 };

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::kPaper256:
      return "paper256";
    case Preset::kDesk64:
      return "desk64";
    case Preset::kDesk32:
      return "desk32";
  }
  return "?";
}

/// Architecture sizes of a preset on top of the default hyperparameters.
///   paper256: 256px, 8-level U-net of width 64, 70x70 patch critic (3 stride-2 + 1 stride-1 blocks)
///   desk64:   64px, 4 levels of width 32, critic with 3 stride-2 blocks (46px field)
///   desk32:   32px grayscale, 3 levels of width 16, critic with 2 stride-2 blocks (22px field)
inline TrainConfig preset_config(Preset p) {
  TrainConfig c;
  switch (p) {
    case Preset::kPaper256:
      c.image_size = 256, c.channels_u = 3, c.channels_v = 3;
      c.depth = 8, c.base_width = 64;
      c.disc_base_width = 64, c.disc_n_down = 3, c.disc_n_flat = 1;
      break;
    case Preset::kDesk64:
      c.image_size = 64, c.channels_u = 3, c.channels_v = 3;
      c.depth = 4, c.base_width = 32;
      c.disc_base_width = 32, c.disc_n_down = 3, c.disc_n_flat = 0;
      break;
    case Preset::kDesk32:
      c.image_size = 32, c.channels_u = 1, c.channels_v = 1;
      c.depth = 3, c.base_width = 16;
      c.disc_base_width = 16, c.disc_n_down = 2, c.disc_n_flat = 0;
      break;
  }
  return c;
}

/// Everything a `train` invocation needs.
struct RunConfig {
  Preset preset = Preset::kDesk32;
  TrainConfig train = preset_config(Preset::kDesk32);
  std::string data_root;
  std::string output_dir = "out";
  std::size_t checkpoint_every = 1000;
  std::size_t log_every = 100;
  std::optional<SyntheticKind> synthetic_task;
  std::size_t synthetic_n = 200;  // images per domain
  std::size_t synthetic_heldout = 32;
};

namespace detail {

template <typename V>
V json_field(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<V, bool>) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean", key);
    return v.get<bool>();
  } else if constexpr (std::is_same_v<V, std::string>) {
    if (!v.is_string()) throw ConfigError("expected a string", key);
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<V>) {
    if (!v.is_number()) throw ConfigError("expected a number", key);
    return v.get<double>();
  } else {
    if (!v.is_number_integer()) throw ConfigError("expected an integer", key);
    if (v.is_number_unsigned()) return static_cast<V>(v.get<std::uint64_t>());
    const auto s = v.get<std::int64_t>();
    if (s < 0) throw ConfigError("must be >= 0", key);
    return static_cast<V>(s);
  }
}

}  // namespace detail

/// Applies the preset named in `j` (default desk32), then every explicit field. Unknown keys,
/// wrong types and out-of-range values raise ConfigError naming the field.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  if (j.contains("preset")) {
    const auto name = detail::json_field<std::string>(j, "preset");
    if (name == "paper256") rc.preset = Preset::kPaper256;
    else if (name == "desk64") rc.preset = Preset::kDesk64;
    else if (name == "desk32") rc.preset = Preset::kDesk32;
    else throw ConfigError("unknown preset '" + name + "'", "preset");
  }
  rc.train = preset_config(rc.preset);
  auto& t = rc.train;
  bool explicit_channels = false;

  for (const auto& [key, _] : j.items()) {
    if (key == "preset") continue;
    else if (key == "lambda_u") t.lambda_u = detail::json_field<double>(j, key);
    else if (key == "lambda_v") t.lambda_v = detail::json_field<double>(j, key);
    else if (key == "clip_c") t.clip_c = detail::json_field<double>(j, key);
    else if (key == "batch_m") t.batch_m = detail::json_field<std::size_t>(j, key);
    else if (key == "n_critic") t.n_critic = detail::json_field<std::size_t>(j, key);
    else if (key == "total_generator_steps") t.total_generator_steps = detail::json_field<std::size_t>(j, key);
    else if (key == "image_size") t.image_size = detail::json_field<std::size_t>(j, key);
    else if (key == "channels_u") t.channels_u = detail::json_field<std::size_t>(j, key), explicit_channels = true;
    else if (key == "channels_v") t.channels_v = detail::json_field<std::size_t>(j, key), explicit_channels = true;
    else if (key == "depth") t.depth = detail::json_field<std::size_t>(j, key);
    else if (key == "base_width") t.base_width = detail::json_field<std::size_t>(j, key);
    else if (key == "dropout_rate") t.dropout_rate = detail::json_field<double>(j, key);
    else if (key == "normalize") t.normalize = detail::json_field<bool>(j, key);
    else if (key == "disc_base_width") t.disc_base_width = detail::json_field<std::size_t>(j, key);
    else if (key == "disc_n_down") t.disc_n_down = detail::json_field<std::size_t>(j, key);
    else if (key == "disc_n_flat") t.disc_n_flat = detail::json_field<std::size_t>(j, key);
    else if (key == "lr") t.lr = detail::json_field<double>(j, key);
    else if (key == "rho") t.rho = detail::json_field<double>(j, key);
    else if (key == "epsilon") t.epsilon = detail::json_field<double>(j, key);
    else if (key == "seed") t.seed = detail::json_field<std::uint64_t>(j, key);
    else if (key == "generator") {
      const auto g = detail::json_field<std::string>(j, key);
      if (g == "unet") t.generator = GeneratorKind::kUNet;
      else if (g == "affine") t.generator = GeneratorKind::kAffine;
      else throw ConfigError("unknown generator '" + g + "'", key);
    }
    else if (key == "data_root") rc.data_root = detail::json_field<std::string>(j, key);
    else if (key == "output_dir") rc.output_dir = detail::json_field<std::string>(j, key);
    else if (key == "checkpoint_every") rc.checkpoint_every = detail::json_field<std::size_t>(j, key);
    else if (key == "log_every") rc.log_every = detail::json_field<std::size_t>(j, key);
    else if (key == "synthetic_n") rc.synthetic_n = detail::json_field<std::size_t>(j, key);
    else if (key == "synthetic_heldout") rc.synthetic_heldout = detail::json_field<std::size_t>(j, key);
    else if (key == "synthetic_task") {
      if (j.at(key).is_null()) {
        rc.synthetic_task.reset();
        continue;
      }
      const auto s = detail::json_field<std::string>(j, key);
      if (s == "invert") rc.synthetic_task = SyntheticKind::kInvert;
      else if (s == "channel_swap") rc.synthetic_task = SyntheticKind::kChannelSwap;
      else throw ConfigError("unknown synthetic task '" + s + "'", key);
    }
    else throw ConfigError("unknown field", key);
  }

  if (rc.synthetic_task) {
    const std::size_t c = *rc.synthetic_task == SyntheticKind::kInvert ? 1 : 3;
    if (explicit_channels && (t.channels_u != c || t.channels_v != c)) {
      throw ConfigError(std::string("synthetic task '") + to_string(*rc.synthetic_task) + "' needs " +
                            std::to_string(c) + " channel(s)",
                        "channels_u");
    }
    t.channels_u = t.channels_v = c;
    if (rc.synthetic_n < 2 || rc.synthetic_n > 100000) throw ConfigError("must lie in [2, 100000]", "synthetic_n");
    if (rc.synthetic_heldout > 100000) throw ConfigError("must lie in [0, 100000]", "synthetic_heldout");
    if (!rc.data_root.empty()) throw ConfigError("set either data_root or synthetic_task, not both", "data_root");
  } else if (rc.data_root.empty()) {
    throw ConfigError("required unless synthetic_task is set", "data_root");
  }
  if (rc.output_dir.empty()) throw ConfigError("must not be empty", "output_dir");
  t.validate();
  return rc;
}

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// Fully explicit JSON form; parse_run_config(to_json(rc)) reproduces rc.
inline nlohmann::json to_json(const RunConfig& rc) {
  const auto& t = rc.train;
  nlohmann::json j = {
      {"preset", to_string(rc.preset)},
      {"lambda_u", t.lambda_u},
      {"lambda_v", t.lambda_v},
      {"clip_c", t.clip_c},
      {"batch_m", t.batch_m},
      {"n_critic", t.n_critic},
      {"total_generator_steps", t.total_generator_steps},
      {"image_size", t.image_size},
      {"channels_u", t.channels_u},
      {"channels_v", t.channels_v},
      {"generator", t.generator == GeneratorKind::kUNet ? "unet" : "affine"},
      {"depth", t.depth},
      {"base_width", t.base_width},
      {"dropout_rate", t.dropout_rate},
      {"normalize", t.normalize},
      {"disc_base_width", t.disc_base_width},
      {"disc_n_down", t.disc_n_down},
      {"disc_n_flat", t.disc_n_flat},
      {"lr", t.lr},
      {"rho", t.rho},
      {"epsilon", t.epsilon},
      {"seed", t.seed},
      {"output_dir", rc.output_dir},
      {"checkpoint_every", rc.checkpoint_every},
      {"log_every", rc.log_every},
      {"synthetic_n", rc.synthetic_n},
      {"synthetic_heldout", rc.synthetic_heldout},
  };
  if (rc.synthetic_task) {
    j["synthetic_task"] = to_string(*rc.synthetic_task);
  } else {
    j["data_root"] = rc.data_root;
  }
  return j;
}

/// The unpaired dataset a run configuration points at.
inline UnpairedDataset load_dataset(const RunConfig& rc) {
  const auto& t = rc.train;
  if (rc.synthetic_task) {
    return make_synthetic_pairtask(*rc.synthetic_task, rc.synthetic_n, t.image_size, t.seed, rc.synthetic_heldout)
        .dataset(t.image_size, t.seed);
  }
  const std::filesystem::path root(rc.data_root);
  return UnpairedDataset(load_domain(root / "domain_u"), load_domain(root / "domain_v"), t.image_size, t.channels_u,
                         t.channels_v, t.seed);
}

}  // namespace dualgan
