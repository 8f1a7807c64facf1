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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualgan/dataset.hpp"
#include "dualgan/errors.hpp"
#include "dualgan/image_io.hpp"
#include "dualgan/model.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// Integer class-id grid.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<int> ids;  // row-major

  int at(std::size_t y, std::size_t x) const { return ids[y * width + x]; }

  void validate() const {
    if (ids.size() != height * width) throw DimensionError("label map size mismatch");
    for (const int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= num_classes) {
        throw DimensionError("label id " + std::to_string(id) + " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
};

using Color = std::array<std::uint8_t, 3>;

/// Palette colors indexed by class id.
using Palette = std::vector<Color>;

/// Reads "class_id R G B" lines. Blank lines and '#' comments are skipped; ids must cover
/// 0..K-1 exactly once and colors must be distinct.
inline Palette parse_palette(std::istream& in) {
  std::vector<std::optional<Color>> slots;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long id, r, g, b;
    if (!(ls >> id)) continue;
    std::string rest;
    if (!(ls >> r >> g >> b) || (ls >> rest) || id < 0 || id > 65535 || r < 0 || r > 255 || g < 0 || g > 255 ||
        b < 0 || b > 255) {
      throw ConfigError("malformed palette line " + std::to_string(lineno), "palette");
    }
    if (static_cast<std::size_t>(id) >= slots.size()) slots.resize(id + 1);
    if (slots[id]) throw ConfigError("duplicate class id " + std::to_string(id), "palette");
    slots[id] = Color{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  }
  Palette palette;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ConfigError("class id " + std::to_string(i) + " missing", "palette");
    palette.push_back(*slots[i]);
  }
  if (palette.size() < 2) throw ConfigError("needs at least 2 classes", "palette");
  for (std::size_t i = 0; i < palette.size(); ++i)
    for (std::size_t j = i + 1; j < palette.size(); ++j)
      if (palette[i] == palette[j]) throw ConfigError("classes " + std::to_string(i) + " and " + std::to_string(j) + " share a color", "palette");
  return palette;
}

inline Palette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open palette " + path.string());
  return parse_palette(in);
}

namespace detail {

inline void check_palette(const Palette& palette) {
  if (palette.size() < 2) throw UsageError("quantize_to_labels: need at least 2 palette colors");
}

/// Nearest palette entry by squared distance; lowest id wins ties.
template <typename D, typename Pixel>
int nearest_color(const Palette& palette, Pixel pixel) {
  int best = 0;
  D best_d = D(0);
  for (std::size_t k = 0; k < palette.size(); ++k) {
    D d = D(0);
    for (std::size_t c = 0; c < 3; ++c) {
      const D diff = pixel(c) - static_cast<D>(palette[k][c]);
      d += diff * diff;
    }
    if (k == 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

}  // namespace detail

/// Exact integer quantization of an 8-bit image. Gray pixels compare as (g, g, g).
inline LabelMap quantize_to_labels(const ImageRecord& img, const Palette& palette) {
  detail::check_palette(palette);
  img.validate();
  LabelMap out{img.height, img.width, palette.size(), std::vector<int>(img.height * img.width)};
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      out.ids[y * img.width + x] = detail::nearest_color<std::int64_t>(palette, [&](std::size_t c) {
        return static_cast<std::int64_t>(img.at(img.channels == 1 ? 0 : c, y, x));
      });
    }
  return out;
}

/// Quantization of a [-1, 1] tensor ([c,h,w] or [1,c,h,w]) in real arithmetic on the
/// 0..255 intensity scale.
template <typename T>
LabelMap quantize_to_labels(const Tensor<T>& img, const Palette& palette) {
  detail::check_palette(palette);
  const std::size_t off = img.rank() == 4 ? 1 : 0;
  if ((img.rank() != 3 && img.rank() != 4) || (off && img.dim(0) != 1)) {
    throw DimensionError("quantize_to_labels: expected one image, got " + to_string(img.shape()));
  }
  const std::size_t c = img.dim(off), h = img.dim(off + 1), w = img.dim(off + 2);
  if (c != 1 && c != 3) throw DimensionError("quantize_to_labels: need 1 or 3 channels");
  LabelMap out{h, w, palette.size(), std::vector<int>(h * w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.ids[y * w + x] = detail::nearest_color<double>(palette, [&](std::size_t ch) {
        return (static_cast<double>(img[((c == 1 ? 0 : ch) * h + y) * w + x]) + 1.0) * 127.5;
      });
    }
  return out;
}

struct ClassScore {
  int class_id = 0;
  std::size_t gt_pixels = 0;
  std::size_t pred_pixels = 0;
  std::size_t intersection = 0;
  std::optional<double> accuracy;  // absent when the class is absent from the ground truth
  std::optional<double> iou;       // absent when the class is absent from both maps
};

struct SegScores {
  double per_pixel_acc = 0.0;
  double per_class_acc = 0.0;
  double class_iou = 0.0;
  std::vector<ClassScore> per_class;
};

/// Per-pixel accuracy, mean per-class accuracy over classes present in gt, and mean IOU over
/// classes present in gt or pred.
inline SegScores segmentation_scores(const LabelMap& pred, const LabelMap& gt) {
  pred.validate();
  gt.validate();
  if (pred.height != gt.height || pred.width != gt.width) throw DimensionError("segmentation_scores: size mismatch");
  if (pred.num_classes != gt.num_classes) throw DimensionError("segmentation_scores: class count mismatch");
  const std::size_t k = gt.num_classes;
  std::vector<std::size_t> gt_count(k, 0), pred_count(k, 0), hit(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt.ids.size(); ++i) {
    const auto g = static_cast<std::size_t>(gt.ids[i]), p = static_cast<std::size_t>(pred.ids[i]);
    ++gt_count[g];
    ++pred_count[p];
    if (g == p) {
      ++hit[g];
      ++correct;
    }
  }
  SegScores s;
  s.per_pixel_acc = gt.ids.empty() ? 0.0 : double(correct) / double(gt.ids.size());
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t acc_n = 0, iou_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassScore cs{static_cast<int>(c), gt_count[c], pred_count[c], hit[c], std::nullopt, std::nullopt};
    if (gt_count[c] > 0) {
      cs.accuracy = double(hit[c]) / double(gt_count[c]);
      acc_sum += *cs.accuracy;
      ++acc_n;
    }
    const std::size_t uni = gt_count[c] + pred_count[c] - hit[c];
    if (uni > 0) {
      cs.iou = double(hit[c]) / double(uni);
      iou_sum += *cs.iou;
      ++iou_n;
    }
    s.per_class.push_back(cs);
  }
  s.per_class_acc = acc_n ? acc_sum / double(acc_n) : 0.0;
  s.class_iou = iou_n ? iou_sum / double(iou_n) : 0.0;
  return s;
}

/// Image-wise mean of the three scores; per-class entries average over images where defined.
inline SegScores average_scores(const std::vector<SegScores>& all) {
  if (all.empty()) throw UsageError("average_scores: no images");
  SegScores out;
  const std::size_t k = all.front().per_class.size();
  std::vector<double> acc(k, 0.0), iou(k, 0.0);
  std::vector<std::size_t> acc_n(k, 0), iou_n(k, 0);
  out.per_class.resize(k);
  for (const auto& s : all) {
    out.per_pixel_acc += s.per_pixel_acc;
    out.per_class_acc += s.per_class_acc;
    out.class_iou += s.class_iou;
    for (std::size_t c = 0; c < k; ++c) {
      const auto& cs = s.per_class.at(c);
      auto& o = out.per_class[c];
      o.class_id = static_cast<int>(c);
      o.gt_pixels += cs.gt_pixels;
      o.pred_pixels += cs.pred_pixels;
      o.intersection += cs.intersection;
      if (cs.accuracy) acc[c] += *cs.accuracy, ++acc_n[c];
      if (cs.iou) iou[c] += *cs.iou, ++iou_n[c];
    }
  }
  const double n = double(all.size());
  out.per_pixel_acc /= n;
  out.per_class_acc /= n;
  out.class_iou /= n;
  for (std::size_t c = 0; c < k; ++c) {
    if (acc_n[c]) out.per_class[c].accuracy = acc[c] / double(acc_n[c]);
    if (iou_n[c]) out.per_class[c].iou = iou[c] / double(iou_n[c]);
  }
  return out;
}

/// {per_pixel_acc, per_class_acc, class_iou, per_class: [...], n_images}
inline nlohmann::json scores_report(const SegScores& s, std::size_t n_images) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : s.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"gt_pixels", c.gt_pixels},
                         {"pred_pixels", c.pred_pixels},
                         {"intersection", c.intersection},
                         {"accuracy", c.accuracy ? nlohmann::json(*c.accuracy) : nlohmann::json(nullptr)},
                         {"iou", c.iou ? nlohmann::json(*c.iou) : nlohmann::json(nullptr)}});
  }
  return {{"per_pixel_acc", s.per_pixel_acc},
          {"per_class_acc", s.per_class_acc},
          {"class_iou", s.class_iou},
          {"per_class", per_class},
          {"n_images", n_images}};
}

/// Mean over the first n images of each domain of l1_mean(x, round trip of x).
template <typename T>
std::pair<double, double> cycle_reconstruction_error(DualGanModel<T>& model, const UnpairedDataset& ds, std::size_t n,
                                                     bool noise_enabled = true) {
  if (n == 0 || n > ds.size_u() || n > ds.size_v()) {
    throw UsageError("cycle_reconstruction_error: n must lie in [1, min(|U|, |V|)]");
  }
  NoGradGuard no_grad;
  double ru = 0.0, rv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ImagesU<T> u = ds.batch_u<T>({i});
    const ImagesV<T> v = ds.batch_v<T>({i});
    ru += static_cast<double>(l1_mean(u.tensor, model.translate_b(model.translate_a(u, noise_enabled), noise_enabled).tensor).item());
    rv += static_cast<double>(l1_mean(v.tensor, model.translate_a(model.translate_b(v, noise_enabled), noise_enabled).tensor).item());
  }
  return {ru / double(n), rv / double(n)};
}

}  // namespace dualgan
