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

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

/// 8-bit image stored channel-planar: pixels[(c*height + y)*width + x].
struct ImageRecord {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
  std::string source;  // file path or synthetic tag

  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }

  void validate() const {
    if (channels != 1 && channels != 3) throw DimensionError("image must have 1 or 3 channels: " + source);
    if (height == 0 || width == 0) throw DimensionError("image has an empty dimension: " + source);
    if (pixels.size() != channels * height * width) throw DimensionError("image pixel count mismatch: " + source);
  }

  bool operator==(const ImageRecord& o) const {
    return channels == o.channels && height == o.height && width == o.width && pixels == o.pixels;
  }
};

inline ImageRecord blank_image(std::size_t channels, std::size_t height, std::size_t width) {
  return {channels, height, width, std::vector<std::uint8_t>(channels * height * width, 0), {}};
}

/// Decodes a PNG into 8-bit gray (1 channel) or RGB (3 channels). Alpha is discarded.
inline ImageRecord read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IngestionError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t c = color ? 3 : 1;
  std::vector<std::uint8_t> interleaved(PNG_IMAGE_SIZE(img));
  // Composite any alpha over black.
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, interleaved.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IngestionError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  ImageRecord rec{c, img.height, img.width, std::vector<std::uint8_t>(interleaved.size()), path.string()};
  for (std::size_t y = 0; y < rec.height; ++y)
    for (std::size_t x = 0; x < rec.width; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) rec.at(ch, y, x) = interleaved[(y * rec.width + x) * c + ch];
  return rec;
}

inline void write_png(const std::filesystem::path& path, const ImageRecord& rec) {
  rec.validate();
  const std::size_t c = rec.channels;
  std::vector<std::uint8_t> interleaved(rec.pixels.size());
  for (std::size_t y = 0; y < rec.height; ++y)
    for (std::size_t x = 0; x < rec.width; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) interleaved[(y * rec.width + x) * c + ch] = rec.at(ch, y, x);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(rec.width);
  img.height = static_cast<png_uint_32>(rec.height);
  img.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, interleaved.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

/// Every *.png in `dir`, decoded, sorted by filename.
inline std::vector<ImageRecord> load_domain(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IngestionError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  if (ec) throw IngestionError("cannot list " + dir.string() + ": " + ec.message());
  if (files.empty()) throw IngestionError("no PNG images in " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  std::vector<ImageRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_png(f));
  return out;
}

/// Gray -> RGB replicates; RGB -> gray uses integer Rec.601 luma.
inline ImageRecord convert_channels(const ImageRecord& rec, std::size_t channels) {
  if (rec.channels == channels) return rec;
  ImageRecord out{channels, rec.height, rec.width, std::vector<std::uint8_t>(channels * rec.height * rec.width),
                  rec.source};
  for (std::size_t y = 0; y < rec.height; ++y)
    for (std::size_t x = 0; x < rec.width; ++x) {
      if (channels == 3) {
        for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = rec.at(0, y, x);
      } else {
        const unsigned luma = (299u * rec.at(0, y, x) + 587u * rec.at(1, y, x) + 114u * rec.at(2, y, x) + 500u) / 1000u;
        out.at(0, y, x) = static_cast<std::uint8_t>(luma);
      }
    }
  return out;
}

/// Largest centered square.
inline ImageRecord center_crop_square(const ImageRecord& rec) {
  if (rec.height == rec.width) return rec;
  const std::size_t side = std::min(rec.height, rec.width);
  const std::size_t oy = (rec.height - side) / 2, ox = (rec.width - side) / 2;
  ImageRecord out{rec.channels, side, side, std::vector<std::uint8_t>(rec.channels * side * side), rec.source};
  for (std::size_t c = 0; c < rec.channels; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) out.at(c, y, x) = rec.at(c, oy + y, ox + x);
  return out;
}

/// Bilinear resample of a square 8-bit image to size x size with half-pixel centers and
/// edge clamping. Returns real-valued intensities in [0, 255], channel-planar.
inline std::vector<double> resize_bilinear(const ImageRecord& rec, std::size_t size) {
  std::vector<double> out(rec.channels * size * size);
  if (rec.height == size && rec.width == size) {
    std::transform(rec.pixels.begin(), rec.pixels.end(), out.begin(), [](std::uint8_t p) { return double(p); });
    return out;
  }
  const double sy = double(rec.height) / double(size), sx = double(rec.width) / double(size);
  auto sample_axis = [](double src, std::size_t n, std::size_t& i0, std::size_t& i1, double& frac) {
    src = std::clamp(src, 0.0, double(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    frac = src - double(i0);
  };
  for (std::size_t y = 0; y < size; ++y) {
    std::size_t y0, y1;
    double fy;
    sample_axis((double(y) + 0.5) * sy - 0.5, rec.height, y0, y1, fy);
    for (std::size_t x = 0; x < size; ++x) {
      std::size_t x0, x1;
      double fx;
      sample_axis((double(x) + 0.5) * sx - 0.5, rec.width, x0, x1, fx);
      for (std::size_t c = 0; c < rec.channels; ++c) {
        const double top = (1.0 - fx) * rec.at(c, y0, x0) + fx * rec.at(c, y0, x1);
        const double bot = (1.0 - fx) * rec.at(c, y1, x0) + fx * rec.at(c, y1, x1);
        out[(c * size + y) * size + x] = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

/// p -> p/127.5 - 1 over intensities in [0, 255].
inline double to_unit_range(double p) { return p / 127.5 - 1.0; }

/// Center-crop, bilinear-resize to image_size, map into [-1, 1]. Shape [1, c, s, s].
template <typename T>
Tensor<T> preprocess(const ImageRecord& rec, std::size_t image_size) {
  rec.validate();
  if (image_size < 4) throw UsageError("preprocess: image_size must be >= 4");
  const auto resized = resize_bilinear(center_crop_square(rec), image_size);
  std::vector<T> data(resized.size());
  std::transform(resized.begin(), resized.end(), data.begin(), [](double p) { return static_cast<T>(to_unit_range(p)); });
  return Tensor<T>::from({1, rec.channels, image_size, image_size}, std::move(data));
}

/// Inverse of the affine map, rounded to nearest and clamped to [0, 255]. Accepts [c,h,w]
/// or [1,c,h,w].
template <typename T>
ImageRecord deprocess(const Tensor<T>& t) {
  std::size_t off = 0;
  if (t.rank() == 4) {
    if (t.dim(0) != 1) throw DimensionError("deprocess: expected a single image, got " + to_string(t.shape()));
    off = 1;
  } else if (t.rank() != 3) {
    throw DimensionError("deprocess: expected [c,h,w] or [1,c,h,w], got " + to_string(t.shape()));
  }
  ImageRecord rec{t.dim(off), t.dim(off + 1), t.dim(off + 2), std::vector<std::uint8_t>(t.numel()), {}};
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double p = std::round((static_cast<double>(t[i]) + 1.0) * 127.5);
    rec.pixels[i] = static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
  }
  return rec;
}

/// Tiles equally shaped images row-major, `columns` per row; empty cells stay black.
inline ImageRecord compose_grid(const std::vector<ImageRecord>& tiles, std::size_t columns) {
  if (tiles.empty()) throw UsageError("image grid needs at least one image");
  if (columns == 0) throw UsageError("image grid needs at least one column");
  const auto& first = tiles.front();
  for (const auto& t : tiles) {
    if (t.channels != first.channels || t.height != first.height || t.width != first.width) {
      throw DimensionError("image grid tiles must share one shape");
    }
  }
  const std::size_t cols = std::min(columns, tiles.size());
  const std::size_t rows = (tiles.size() + columns - 1) / columns;
  ImageRecord grid = blank_image(first.channels, rows * first.height, cols * first.width);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::size_t r = i / columns, col = i % columns;
    for (std::size_t c = 0; c < first.channels; ++c)
      for (std::size_t y = 0; y < first.height; ++y)
        for (std::size_t x = 0; x < first.width; ++x)
          grid.at(c, r * first.height + y, col * first.width + x) = tiles[i].at(c, y, x);
  }
  return grid;
}

/// Deprocesses each tensor and writes the tiled grid as PNG.
template <typename T>
void save_image_grid(const std::filesystem::path& path, const std::vector<Tensor<T>>& tensors, std::size_t columns) {
  if (tensors.empty()) throw UsageError("save_image_grid: no images");
  std::vector<ImageRecord> tiles;
  tiles.reserve(tensors.size());
  for (const auto& t : tensors) tiles.push_back(deprocess(t));
  write_png(path, compose_grid(tiles, columns));
}

}  // namespace dualgan
