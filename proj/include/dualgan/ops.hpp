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
#include <cstddef>
#include <string>
#include <vector>

#include "dualgan/errors.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"

namespace dualgan {

namespace detail {

// Row-major dense kernels with a fixed accumulation order. The innermost loop runs over
// contiguous output columns so it vectorizes without reassociating any sum.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

/// Geometry of one strided, zero-padded convolution window sweep.
struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;  // column side
  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// col[(c*kh+i)*kw+j, oy*out_w+ox] = image[c, oy*s-p+i, ox*s-p+j], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const auto ih = static_cast<std::ptrdiff_t>(g.height);
  const auto iw = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        T* dst = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          T* drow = dst + oy * g.out_w;
          if (y < 0 || y >= ih) {
            std::fill(drow, drow + g.out_w, T(0));
            continue;
          }
          const T* srow = plane + y * iw;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            drow[ox] = (x < 0 || x >= iw) ? T(0) : srow[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image) {
  const auto ih = static_cast<std::ptrdiff_t>(g.height);
  const auto iw = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j, ++row) {
        const T* src = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= ih) continue;
          T* drow = plane + y * iw;
          const T* srow = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < iw) drow[x] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

/// Elementwise map with derivative supplied as a function of (input, output).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D df, const char* name) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(
      x.shape(), std::move(out), {x.node()},
      [df](Node<T>& self) {
        auto& src = *self.parents[0];
        auto g = src.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(src.data[i], self.data[i]);
      },
      name);
}

}  // namespace detail

/// Cross-correlation of input [b,ci,h,w] with kernel [co,ci,kh,kw], zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t pad) {
  detail::require_rank(input, 4, "conv2d", "input");
  detail::require_rank(kernel, 4, "conv2d", "kernel");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t b = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != ci) {
    throw DimensionError("conv2d: input has " + std::to_string(ci) + " channels but kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  if (h + 2 * pad < kh || w + 2 * pad < kw) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than padded input " + to_string(input.shape()));
  }
  const detail::ConvGeometry g{ci, h, w, kh, kw, stride, pad, (h + 2 * pad - kh) / stride + 1,
                               (w + 2 * pad - kw) / stride + 1};
  const std::size_t rows = g.rows(), cols = g.cols();
  const std::size_t in_plane = ci * h * w, out_plane = co * cols;

  std::vector<T> out(b * out_plane, T(0));
  std::vector<T> col(rows * cols);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t n = 0; n < b; ++n) {
    detail::im2col(g, x + n * in_plane, col.data());
    detail::gemm_nn(co, cols, rows, k, col.data(), out.data() + n * out_plane);
  }
  return detail::make_result<T>(
      {b, co, g.out_h, g.out_w}, std::move(out), {input.node(), kernel.node()},
      [g, b, co](detail::Node<T>& self) {
        auto& in = *self.parents[0];
        auto& ker = *self.parents[1];
        const std::size_t rows = g.rows(), cols = g.cols();
        const std::size_t in_plane = g.channels * g.height * g.width, out_plane = co * cols;
        std::vector<T> col(rows * cols);
        std::vector<T> dcol(rows * cols);
        for (std::size_t n = 0; n < b; ++n) {
          const T* dy = self.grad.data() + n * out_plane;
          if (ker.requires_grad) {
            detail::im2col(g, in.data.data() + n * in_plane, col.data());
            const auto col_t = detail::transpose(col.data(), rows, cols);
            detail::gemm_nn(co, rows, cols, dy, col_t.data(), ker.grad_slot().data());
          }
          if (in.requires_grad) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_tn(rows, cols, co, ker.data.data(), dy, dcol.data());
            detail::col2im(g, dcol.data(), in.grad_slot().data() + n * in_plane);
          }
        }
      },
      "conv2d");
}

/// Adjoint of conv2d: input [b,ci,h,w], kernel [ci,co,kh,kw], output spatial
/// (h-1)*stride - 2*pad + kh.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                           std::size_t pad) {
  detail::require_rank(input, 4, "conv2d_transpose", "input");
  detail::require_rank(kernel, 4, "conv2d_transpose", "kernel");
  if (stride < 1) throw DimensionError("conv2d_transpose: stride must be >= 1");
  const std::size_t b = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != ci) {
    throw DimensionError("conv2d_transpose: input has " + std::to_string(ci) +
                         " channels but kernel expects " + std::to_string(kernel.dim(0)));
  }
  if (h == 0 || w == 0 || (h - 1) * stride + kh < 2 * pad + 1 || (w - 1) * stride + kw < 2 * pad + 1) {
    throw DimensionError("conv2d_transpose: padding consumes the whole output for input " +
                         to_string(input.shape()));
  }
  const std::size_t oh = (h - 1) * stride + kh - 2 * pad;
  const std::size_t ow = (w - 1) * stride + kw - 2 * pad;
  const detail::ConvGeometry g{co, oh, ow, kh, kw, stride, pad, h, w};
  const std::size_t rows = g.rows(), cols = g.cols();
  const std::size_t in_plane = ci * cols, out_plane = co * oh * ow;

  std::vector<T> out(b * out_plane, T(0));
  std::vector<T> col(rows * cols);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t n = 0; n < b; ++n) {
    std::fill(col.begin(), col.end(), T(0));
    detail::gemm_tn(rows, cols, ci, k, x + n * in_plane, col.data());
    detail::col2im(g, col.data(), out.data() + n * out_plane);
  }
  return detail::make_result<T>(
      {b, co, oh, ow}, std::move(out), {input.node(), kernel.node()},
      [g, b, ci](detail::Node<T>& self) {
        auto& in = *self.parents[0];
        auto& ker = *self.parents[1];
        const std::size_t rows = g.rows(), cols = g.cols();
        const std::size_t in_plane = ci * cols, out_plane = g.channels * g.height * g.width;
        std::vector<T> dcol(rows * cols);
        for (std::size_t n = 0; n < b; ++n) {
          detail::im2col(g, self.grad.data() + n * out_plane, dcol.data());
          if (in.requires_grad) {
            detail::gemm_nn(ci, cols, rows, ker.data.data(), dcol.data(), in.grad_slot().data() + n * in_plane);
          }
          if (ker.requires_grad) {
            const auto dcol_t = detail::transpose(dcol.data(), rows, cols);
            detail::gemm_nn(ci, rows, cols, in.data.data() + n * in_plane, dcol_t.data(), ker.grad_slot().data());
          }
        }
      },
      "conv2d_transpose");
}

/// Adds bias[c] to every element of channel c of a [b,c,h,w] tensor.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_rank(x, 4, "add_channel_bias", "input");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (bias.numel() != c) {
    throw DimensionError("add_channel_bias: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(c) + " channels");
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* p = out.data() + (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] += bv[ch];
    }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), bias.node()},
      [b, c, hw](detail::Node<T>& self) {
        auto& in = *self.parents[0];
        auto& bs = *self.parents[1];
        if (in.requires_grad) {
          auto g = in.grad_slot();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bs.requires_grad) {
          auto g = bs.grad_slot();
          for (std::size_t n = 0; n < b; ++n)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T* p = self.grad.data() + (n * c + ch) * hw;
              T acc = T(0);
              for (std::size_t i = 0; i < hw; ++i) acc += p[i];
              g[ch] += acc;
            }
        }
      },
      "add_channel_bias");
}

enum class ActivationKind { kLeakyRelu, kRelu, kTanh, kIdentity };

struct Activation {
  ActivationKind kind = ActivationKind::kIdentity;
  double slope = 0.2;  // leaky_relu only

  static Activation leaky_relu(double s = 0.2) { return {ActivationKind::kLeakyRelu, s}; }
  static Activation relu() { return {ActivationKind::kRelu, 0.0}; }
  static Activation tanh() { return {ActivationKind::kTanh, 0.0}; }
  static Activation identity() { return {ActivationKind::kIdentity, 0.0}; }
};

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (!(slope > T(0) && slope < T(1))) throw UsageError("leaky_relu: slope must lie in (0, 1)");
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; }, "leaky_relu");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::kLeakyRelu:
      return leaky_relu(x, static_cast<T>(act.slope));
    case ActivationKind::kRelu:
      return relu(x);
    case ActivationKind::kTanh:
      return tanh(x);
    case ActivationKind::kIdentity:
      break;
  }
  return x;
}

/// Concatenates [b,c1,h,w] and [b,c2,h,w] along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 4, "concat_channels", "first input");
  detail::require_rank(b, 4, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: batch/spatial mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), hw = a.dim(2) * a.dim(3);
  const std::size_t sa = a.dim(1) * hw, sb = b.dim(1) * hw;
  std::vector<T> out(n * (sa + sb));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(b.data().data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  return detail::make_result<T>(
      {n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, std::move(out), {a.node(), b.node()},
      [n, sa, sb](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
          const T* g = self.grad.data() + i * (sa + sb);
          if (pa.requires_grad) {
            T* d = pa.grad_slot().data() + i * sa;
            for (std::size_t j = 0; j < sa; ++j) d[j] += g[j];
          }
          if (pb.requires_grad) {
            T* d = pb.grad_slot().data() + i * sb;
            for (std::size_t j = 0; j < sb; ++j) d[j] += g[sa + j];
          }
        }
      },
      "concat_channels");
}

/// mean(|a - b|) as a scalar. The subgradient at a tie is 0.
template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "l1_mean");
  const std::size_t n = a.numel();
  if (n == 0) throw DimensionError("l1_mean: empty operands");
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return detail::make_result<T>(
      {}, {acc / static_cast<T>(n)}, {a.node(), b.node()},
      [n](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T scale = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T d = pa.data[i] - pb.data[i];
          const T s = d > T(0) ? scale : (d < T(0) ? -scale : T(0));
          if (pa.requires_grad) pa.grad_slot()[i] += s;
          if (pb.requires_grad) pb.grad_slot()[i] -= s;
        }
      },
      "l1_mean");
}

/// Inverted dropout: zero each entry with probability `rate`, scale survivors by 1/(1-rate).
/// Identity when disabled; the mask consumes one draw per element from `rng` otherwise.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, RngStream& rng, bool enabled) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("dropout: rate must lie in [0, 1]");
  if (!enabled || rate == 0.0) return x;
  const T keep_scale = rate < 1.0 ? static_cast<T>(1.0 / (1.0 - rate)) : T(0);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node()},
      [mask = std::move(mask)](detail::Node<T>& self) {
        auto g = self.parents[0]->grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
      },
      "dropout");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return detail::make_result<T>(
      {}, {acc}, {x.node()},
      [](detail::Node<T>& self) {
        auto g = self.parents[0]->grad_slot();
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return detail::make_result<T>(
      {}, {acc / static_cast<T>(n)}, {x.node()},
      [n](detail::Node<T>& self) {
        auto g = self.parents[0]->grad_slot();
        const T d = self.grad[0] / static_cast<T>(n);
        for (auto& v : g) v += d;
      },
      "mean");
}

namespace detail {

template <typename T>
Tensor<T> binary_linear(const Tensor<T>& a, const Tensor<T>& b, T sign, const char* name) {
  require_same_shape(a, b, name);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sign > T(0) ? a[i] + b[i] : a[i] - b[i];
  return make_result<T>(
      a.shape(), std::move(out), {a.node(), b.node()},
      [sign](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto g = pa.grad_slot();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
          auto g = pb.grad_slot();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
        }
      },
      name);
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_linear(a, b, T(1), "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_linear(a, b, T(-1), "sub");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return detail::unary(
      x, [s](T v) { return v * s; }, [s](T, T) { return s; }, "mul_scalar");
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); }, "neg");
}

}  // namespace dualgan
