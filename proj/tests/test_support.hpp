#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan::testing {

inline Tensor<double> random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = false) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

inline double inner(const Tensor<double>& a, const Tensor<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

/// sum(w * t) for fixed random weights w; every output coordinate contributes to the
/// gradient with a distinct weight.
inline Tensor<double> weighted_probe(const Tensor<double>& t, std::uint64_t seed) {
  RngStream wr(seed);
  std::vector<double> weights(t.numel());
  for (auto& w : weights) w = 2.0 * wr.uniform() - 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) acc += weights[i] * t[i];
  return detail::make_result<double>(
      {}, {acc}, {t.node()},
      [weights](detail::Node<double>& self) {
        auto g = self.parents[0]->grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
      },
      "weighted_probe");
}

/// Direct nested-loop cross-correlation with zero padding.
inline std::vector<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride,
                                         std::size_t pad, std::size_t& oh, std::size_t& ow) {
  const std::size_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(b * co * oh * ow, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = long(y * stride + i) - long(pad), ix = long(xx * stride + j) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                acc += x[((n * ci + c) * h + iy) * w + ix] * k[((o * ci + c) * kh + i) * kw + j];
              }
          out[((n * co + o) * oh + y) * ow + xx] = acc;
        }
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dualgan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dualgan::testing
