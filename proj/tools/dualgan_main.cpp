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

#include <cstddef>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dualgan/commands.hpp"

int main(int argc, char** argv) {
  namespace cli = dualgan::cli;
  CLI::App app{"Unsupervised dual image-to-image translation: train, translate, evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  bool deterministic = false;
  auto* train = app.add_subcommand("train", "Run the alternating critic/generator training loop");
  train->add_option("--config", config_path, "JSON run configuration")->required();
  train->add_flag("--deterministic", deterministic, "Fixed reduction order (always on in this build)");

  std::string ckpt, direction, in_dir, out_dir;
  bool no_noise = false;
  auto* translate = app.add_subcommand("translate", "Translate a directory of PNGs with one generator");
  translate->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  translate->add_option("--dir", direction, "a2b (G_A: U->V) or b2a (G_B: V->U)")
      ->required()
      ->check(CLI::IsMember({"a2b", "b2a"}));
  translate->add_option("--in", in_dir, "Input directory")->required();
  translate->add_option("--out", out_dir, "Output directory")->required();
  translate->add_flag("--no-noise", no_noise, "Disable dropout noise");

  std::string pred_dir, gt_dir, palette;
  auto* eval = app.add_subcommand("eval-seg", "Segmentation accuracy of label images against ground truth");
  eval->add_option("--pred", pred_dir, "Predicted label images")->required();
  eval->add_option("--gt", gt_dir, "Ground-truth label images")->required();
  eval->add_option("--palette", palette, "Palette file: one 'class_id R G B' line per class")->required();

  std::string grid_ckpt, grid_out;
  std::size_t grid_n = 4;
  auto* grid = app.add_subcommand("grid", "Input | translation | reconstruction grid for both directions");
  grid->add_option("--ckpt", grid_ckpt, "Checkpoint file")->required();
  grid->add_option("--n", grid_n, "Samples per domain")->required();
  grid->add_option("--out", grid_out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  if (*train) return cli::cmd_train(config_path, deterministic, std::cout, std::cerr);
  if (*translate) {
    const auto dir = direction == "a2b" ? cli::Direction::kA2B : cli::Direction::kB2A;
    return cli::cmd_translate(ckpt, dir, in_dir, out_dir, !no_noise, std::cout, std::cerr);
  }
  if (*eval) return cli::cmd_eval_seg(pred_dir, gt_dir, palette, std::cout, std::cerr);
  if (*grid) return cli::cmd_grid(grid_ckpt, grid_n, grid_out, std::cout, std::cerr);
  return cli::kExitUsage;
}
