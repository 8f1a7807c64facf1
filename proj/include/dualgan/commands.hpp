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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualgan/checkpoint.hpp"
#include "dualgan/config.hpp"
#include "dualgan/dataset.hpp"
#include "dualgan/errors.hpp"
#include "dualgan/image_io.hpp"
#include "dualgan/metrics.hpp"
#include "dualgan/model.hpp"

namespace dualgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Training and inference in the command-line tool run in 32-bit.
using Real = float;

namespace fs = std::filesystem;

inline std::string checkpoint_filename(std::size_t step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06zu.dgan", step);
  return buf;
}

inline std::string sample_filename(std::size_t step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "samples_%06zu.png", step);
  return buf;
}

/// Rows of (x, translation, reconstruction): the first n U images through G_A then G_B, then
/// the first n V images through G_B then G_A. Mixed channel counts are promoted to RGB.
/// Noise comes from a private stream so rendering never perturbs training.
inline ImageRecord render_translation_grid(DualGanModel<Real>& model, const UnpairedDataset& ds, std::size_t n,
                                           bool noise_enabled = true) {
  NoGradGuard no_grad;
  RngStream z = RngStream(model.config().seed, 404);
  RngStream z_prime = RngStream(model.config().seed, 405);
  const std::size_t grid_channels = ds.channels_u() == ds.channels_v() ? ds.channels_u() : 3;
  std::vector<ImageRecord> tiles;
  auto push = [&](const Tensor<Real>& t) { tiles.push_back(convert_channels(deprocess(t), grid_channels)); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = ds.batch_u<Real>({i}).tensor;
    const auto fake = model.g_a().forward(u, z, noise_enabled);
    push(u);
    push(fake);
    push(model.g_b().forward(fake, z_prime, noise_enabled));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = ds.batch_v<Real>({i}).tensor;
    const auto fake = model.g_b().forward(v, z_prime, noise_enabled);
    push(v);
    push(fake);
    push(model.g_a().forward(fake, z, noise_enabled));
  }
  return compose_grid(tiles, 3);
}

/// Mean over held-out images of l1_mean(G_A(u), T(u)) for a synthetic task.
inline double synthetic_map_error(DualGanModel<Real>& model, const SyntheticTask& task, bool noise_enabled = true) {
  NoGradGuard no_grad;
  RngStream z = RngStream(model.config().seed, 406);
  double acc = 0.0;
  for (const auto& rec : task.heldout_u) {
    const auto u = preprocess<Real>(rec, model.config().image_size);
    acc += l1_mean(model.g_a().forward(u, z, noise_enabled), apply_synthetic_map(task.kind, u)).item();
  }
  return task.heldout_u.empty() ? 0.0 : acc / double(task.heldout_u.size());
}

struct LoadedCheckpoint {
  RunConfig config;
  DualGanModel<Real> model;
};

inline LoadedCheckpoint load_model(const fs::path& path) {
  const Checkpoint ckpt = checkpoint_load(path);
  RunConfig rc = parse_run_config(ckpt.config_json);
  DualGanModel<Real> model(rc.train);
  restore_checkpoint(model, ckpt);
  return {std::move(rc), std::move(model)};
}

inline int cmd_train(const fs::path& config_path, bool deterministic, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  try {
    rc = load_run_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  try {
    const auto& cfg = rc.train;
    std::optional<SyntheticTask> task;
    if (rc.synthetic_task) {
      task = make_synthetic_pairtask(*rc.synthetic_task, rc.synthetic_n, cfg.image_size, cfg.seed, rc.synthetic_heldout);
    }
    UnpairedDataset ds = task ? task->dataset(cfg.image_size, cfg.seed) : load_dataset(rc);
    const fs::path out_dir(rc.output_dir);
    fs::create_directories(out_dir);

    DualGanModel<Real> model(cfg);
    const std::string config_json = to_json(rc).dump();
    std::ofstream log(out_dir / "loss.tsv", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (out_dir / "loss.tsv").string());
    log << kLogHeader << '\n';

    out << "training " << cfg.total_generator_steps << " generator steps (preset " << to_string(rc.preset)
        << (deterministic ? ", deterministic" : "") << ")\n";
    const std::size_t n_grid = std::min<std::size_t>({4, ds.size_u(), ds.size_v()});

    TrainCallbacks<Real> cb;
    cb.checkpoint_every = rc.checkpoint_every;
    cb.on_record = [&](const StepRecord& r) {
      log << format_log_line(r) << '\n';
      if (r.phase == Phase::kGenerator && rc.log_every > 0 && r.step % rc.log_every == 0) {
        out << "step " << r.step << " l_g " << *r.l_g << " recon_u " << *r.recon_u << " recon_v " << *r.recon_v << '\n';
      }
    };
    cb.on_checkpoint = [&](std::size_t step) {
      checkpoint_save(out_dir / checkpoint_filename(step), make_checkpoint(model, config_json));
      write_png(out_dir / sample_filename(step), render_translation_grid(model, ds, n_grid));
    };
    train(model, ds, cfg, cb);
    log.flush();
    if (!log) throw IoError("write failed for loss log");
    if (task) out << "held-out synthetic map l1: " << synthetic_map_error(model, *task) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

enum class Direction { kA2B, kB2A };

inline std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

inline int cmd_translate(const fs::path& ckpt_path, Direction dir, const fs::path& in_dir, const fs::path& out_dir,
                         bool noise, std::ostream& out, std::ostream& err) {
  try {
    auto [rc, model] = load_model(ckpt_path);
    const auto& cfg = rc.train;
    const std::size_t want = dir == Direction::kA2B ? cfg.channels_u : cfg.channels_v;
    Generator<Real>& g = dir == Direction::kA2B ? model.g_a() : model.g_b();
    const auto files = list_pngs(in_dir);
    if (files.empty()) throw IngestionError("no PNG images in " + in_dir.string());
    std::vector<ImageRecord> inputs;
    for (const auto& f : files) {
      inputs.push_back(read_png(f));
      if (inputs.back().channels != want) {
        err << "error: " << f.filename().string() << " has " << inputs.back().channels << " channel(s) but direction "
            << (dir == Direction::kA2B ? "a2b" : "b2a") << " expects " << want << '\n';
        return kExitUsage;
      }
    }
    fs::create_directories(out_dir);
    NoGradGuard no_grad;
    RngStream z(cfg.seed, dir == Direction::kA2B ? 407 : 408);
    double map_err = 0.0;
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto x = preprocess<Real>(inputs[i], cfg.image_size);
      const auto y = g.forward(x, z, noise);
      write_png(out_dir / files[i].filename(), deprocess(y));
      if (rc.synthetic_task) map_err += l1_mean(y, apply_synthetic_map(*rc.synthetic_task, x)).item();
    }
    out << "translated " << files.size() << " image(s)\n";
    if (rc.synthetic_task) {
      out << "synthetic map l1: " << map_err / double(files.size()) << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline int cmd_eval_seg(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& palette_path,
                        std::ostream& out, std::ostream& err) {
  try {
    const Palette palette = load_palette(palette_path);
    const auto pred_files = list_pngs(pred_dir);
    const auto gt_files = list_pngs(gt_dir);
    std::set<std::string> pred_names, gt_names;
    for (const auto& f : pred_files) pred_names.insert(f.filename().string());
    for (const auto& f : gt_files) gt_names.insert(f.filename().string());
    if (pred_names != gt_names || pred_names.empty()) {
      err << "error: prediction and ground-truth file sets differ\n";
      for (const auto& n : pred_names)
        if (!gt_names.count(n)) err << "  only in pred: " << n << '\n';
      for (const auto& n : gt_names)
        if (!pred_names.count(n)) err << "  only in gt: " << n << '\n';
      if (pred_names.empty()) err << "  no images\n";
      return kExitUsage;
    }
    std::vector<SegScores> all;
    for (const auto& name : gt_names) {
      const ImageRecord p = read_png(pred_dir / name), g = read_png(gt_dir / name);
      if (p.height != g.height || p.width != g.width) {
        err << "error: " << name << " differs in size between pred and gt\n";
        return kExitUsage;
      }
      all.push_back(segmentation_scores(quantize_to_labels(p, palette), quantize_to_labels(g, palette)));
    }
    out << scores_report(average_scores(all), all.size()).dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline int cmd_grid(const fs::path& ckpt_path, std::size_t n, const fs::path& out_path, std::ostream& out,
                    std::ostream& err) {
  try {
    if (n == 0) {
      err << "error: --n must be >= 1\n";
      return kExitUsage;
    }
    auto [rc, model] = load_model(ckpt_path);
    const UnpairedDataset ds = load_dataset(rc);
    const std::size_t avail = std::min(ds.size_u(), ds.size_v());
    if (n > avail) {
      err << "warning: --n " << n << " exceeds dataset size, using " << avail << '\n';
      n = avail;
    }
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(out_path, render_translation_grid(model, ds, n));
    out << "wrote " << 2 * n << " x 3 grid to " << out_path.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace dualgan::cli
