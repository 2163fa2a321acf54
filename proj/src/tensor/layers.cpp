// Copyright 2026 The Orbit Metric Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "orbit/layers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "orbit/parallel.hpp"

namespace orbit {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

struct ConvGeometry {
  std::size_t n, c, h, w;      // conv input
  std::size_t f, kh, kw;       // filters and kernel
  std::size_t oh, ow;          // conv output
  std::size_t stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t in_plane() const { return c * h * w; }
  std::size_t out_plane() const { return f * oh * ow; }
  std::size_t out_pixels() const { return oh * ow; }
};

template <typename T>
void check_weight(const BasicTensor<T>& weight, std::size_t channels, const char* op) {
  require(weight.rank() == 4, std::string(op) + ": weight must be rank 4, got " +
                                  shape_string(weight.shape()));
  require(weight.dim(1) == channels,
          std::string(op) + ": input has " + std::to_string(channels) +
              " channels but weight expects " + std::to_string(weight.dim(1)));
}

// Output columns x in [lo, hi) read input column x*stride + j - pad inside
// the image.
struct ColumnRange {
  std::size_t lo, hi;
};

inline ColumnRange valid_columns(const ConvGeometry& g, std::size_t j) {
  const std::ptrdiff_t s = std::ptrdiff_t(g.stride), off = std::ptrdiff_t(j) - std::ptrdiff_t(g.pad);
  const std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  const std::ptrdiff_t last = std::ptrdiff_t(g.w) - 1 - off;  // x*s <= last
  std::ptrdiff_t hi = last < 0 ? 0 : last / s + 1;
  hi = std::min(hi, std::ptrdiff_t(g.ow));
  return {std::size_t(std::min(lo, hi)), std::size_t(hi)};
}

// col[(ci*kh + i)*kw + j][y*ow + x] = img[ci][y*s - p + i][x*s - p + j]
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ci * g.kh + i) * g.kw + j) * pixels;
        const ColumnRange r = valid_columns(g, j);
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy = std::ptrdiff_t(y * g.stride + i) - std::ptrdiff_t(g.pad);
          T* dst = row + y * g.ow;
          if (iy < 0 || iy >= std::ptrdiff_t(g.h) || r.lo == r.hi) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          // First valid input column, then every stride-th one.
          const T* src = img + (ci * g.h + std::size_t(iy)) * g.w + (r.lo * g.stride + j - g.pad);
          std::fill(dst, dst + r.lo, T{0});
          if (g.stride == 1) {
            std::copy(src, src + (r.hi - r.lo), dst + r.lo);
          } else {
            for (std::size_t x = r.lo; x < r.hi; ++x) dst[x] = src[(x - r.lo) * g.stride];
          }
          std::fill(dst + r.hi, dst + g.ow, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: img must be zeroed by the caller.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* img) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ci * g.kh + i) * g.kw + j) * pixels;
        const ColumnRange r = valid_columns(g, j);
        if (r.lo == r.hi) continue;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy = std::ptrdiff_t(y * g.stride + i) - std::ptrdiff_t(g.pad);
          if (iy < 0 || iy >= std::ptrdiff_t(g.h)) continue;
          T* dst = img + (ci * g.h + std::size_t(iy)) * g.w + (r.lo * g.stride + j - g.pad);
          const T* src = row + y * g.ow + r.lo;
          if (g.stride == 1) {
            for (std::size_t x = 0; x < r.hi - r.lo; ++x) dst[x] += src[x];
          } else {
            for (std::size_t x = 0; x < r.hi - r.lo; ++x) dst[x * g.stride] += src[x];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

// Sums per-image weight-gradient partials in image order. Partials are
// produced independently of the worker split, so the sum is identical for
// any worker count.
template <typename T>
class OrderedAccumulator {
 public:
  OrderedAccumulator(std::size_t items, std::size_t width)
      : width_(width), streaming_(num_workers() <= 1 || items <= 1) {
    total_.assign(width, T{0});
    if (!streaming_) partials_.assign(items * width, T{0});
  }
  // Storage for item i's partial (overwritten by the caller).
  T* slot(std::size_t i) {
    if (streaming_) return scratch<T>(1, width_).data();
    return partials_.data() + i * width_;
  }
  void commit(std::size_t i) {
    if (!streaming_) return;
    const T* p = scratch<T>(1, width_).data();
    for (std::size_t k = 0; k < width_; ++k) total_[k] += p[k];
    (void)i;
  }
  std::vector<T> finish(std::size_t items) {
    if (!streaming_) {
      for (std::size_t i = 0; i < items; ++i) {
        const T* p = partials_.data() + i * width_;
        for (std::size_t k = 0; k < width_; ++k) total_[k] += p[k];
      }
    }
    return std::move(total_);
  }

 private:
  std::size_t width_;
  bool streaming_;
  std::vector<T> total_;
  std::vector<T> partials_;
};

// Fixed-order sums over eight interleaved double lanes, so the compiler can
// vectorize without changing results between runs.
constexpr std::size_t kLanes = 8;

inline double fold(const double (&acc)[kLanes]) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double lane_sum(const T* p, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += double(p[k + l]);
  }
  for (; k < n; ++k) acc[k % kLanes] += double(p[k]);
  return fold(acc);
}

template <typename T>
double lane_centered_squares(const T* p, std::size_t n, double mean) {
  double acc[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = double(p[k + l]) - mean;
      acc[l] += d * d;
    }
  }
  for (; k < n; ++k) {
    const double d = double(p[k]) - mean;
    acc[k % kLanes] += d * d;
  }
  return fold(acc);
}

template <typename T>
double lane_dot(const T* a, const T* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += double(a[k + l]) * double(b[k + l]);
  }
  for (; k < n; ++k) acc[k % kLanes] += double(a[k]) * double(b[k]);
  return fold(acc);
}

template <typename T>
BasicTensor<T> channel_sums(const BasicTensor<T>& t) {
  const std::size_t n = t.dim(0), c = t.dim(1), plane = t.size() / (n * c);
  BasicTensor<T> out({c});
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* p = t.data() + (ni * c + ci) * plane;
      T s{0};
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      out[ci] += s;
    }
  }
  return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw ConfigError("convolution stride must be positive");
  if (in + 2 * pad < kernel) {
    throw DimensionError("kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

// ----------------------------------------------------------------- conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  require(input.rank() == 4, "conv2d: input must be NCHW, got " + shape_string(input.shape()));
  check_weight(weight, input.dim(1), "conv2d");
  require(bias.size() == weight.dim(0), "conv2d: bias length does not match filter count");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), 0, 0, stride, pad};
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);

  BasicTensor<T> out({g.n, g.f, g.oh, g.ow});
  parallel_for(g.n, [&](std::size_t n) {
    auto& col = scratch<T>(0, g.patch() * g.out_pixels());
    im2col(input.data() + n * g.in_plane(), g, col.data());
    T* y = out.data() + n * g.out_plane();
    detail::gemm(false, false, g.f, g.out_pixels(), g.patch(), weight.data(), col.data(), y);
    for (std::size_t fi = 0; fi < g.f; ++fi) {
      T* p = y + fi * g.out_pixels();
      for (std::size_t k = 0; k < g.out_pixels(); ++k) p[k] += bias[fi];
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& upstream, std::size_t stride,
                             std::size_t pad, bool need_input_grad) {
  require(input.rank() == 4, "conv2d_backward: input must be NCHW");
  check_weight(weight, input.dim(1), "conv2d_backward");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), 0, 0, stride, pad};
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);
  require(upstream.shape() == Shape{g.n, g.f, g.oh, g.ow},
          "conv2d_backward: upstream shape " + shape_string(upstream.shape()) +
              " does not match output");

  ConvGrads<T> grads;
  if (need_input_grad) grads.input = BasicTensor<T>(input.shape());
  OrderedAccumulator<T> dw(g.n, weight.size());
  parallel_for(g.n, [&](std::size_t n) {
    auto& col = scratch<T>(0, g.patch() * g.out_pixels());
    im2col(input.data() + n * g.in_plane(), g, col.data());
    const T* dy = upstream.data() + n * g.out_plane();
    detail::gemm(false, true, g.f, g.patch(), g.out_pixels(), dy, col.data(), dw.slot(n));
    dw.commit(n);
    if (need_input_grad) {
      detail::gemm(true, false, g.patch(), g.out_pixels(), g.f, weight.data(), dy, col.data());
      col2im(col.data(), g, grads.input.data() + n * g.in_plane());
    }
  });
  grads.weight = BasicTensor<T>(weight.shape(), dw.finish(g.n));
  grads.bias = channel_sums(upstream);
  return grads;
}

template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride,
                                std::size_t pad, std::size_t out_h, std::size_t out_w) {
  require(input.rank() == 4, "conv2d_transpose: input must be NCHW");
  require(weight.rank() == 4, "conv2d_transpose: weight must be rank 4");
  require(input.dim(1) == weight.dim(0),
          "conv2d_transpose: input has " + std::to_string(input.dim(1)) +
              " channels but weight has " + std::to_string(weight.dim(0)) + " filters");
  require(bias.size() == weight.dim(1), "conv2d_transpose: bias length mismatch");
  if (out_h == 0) out_h = (input.dim(2) - 1) * stride + weight.dim(2) - 2 * pad;
  if (out_w == 0) out_w = (input.dim(3) - 1) * stride + weight.dim(3) - 2 * pad;
  ConvGeometry g{input.dim(0), weight.dim(1), out_h, out_w,
                 weight.dim(0), weight.dim(2), weight.dim(3), 0, 0, stride, pad};
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);
  require(g.oh == input.dim(2) && g.ow == input.dim(3),
          "conv2d_transpose: requested output size is inconsistent with input");

  BasicTensor<T> out({g.n, g.c, g.h, g.w});
  parallel_for(g.n, [&](std::size_t n) {
    auto& col = scratch<T>(0, g.patch() * g.out_pixels());
    detail::gemm(true, false, g.patch(), g.out_pixels(), g.f, weight.data(),
                 input.data() + n * g.out_plane(), col.data());
    T* x = out.data() + n * g.in_plane();
    col2im(col.data(), g, x);
    const std::size_t plane = g.h * g.w;
    for (std::size_t ci = 0; ci < g.c; ++ci) {
      for (std::size_t k = 0; k < plane; ++k) x[ci * plane + k] += bias[ci];
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_transpose_backward(const BasicTensor<T>& input,
                                       const BasicTensor<T>& weight,
                                       const BasicTensor<T>& upstream, std::size_t stride,
                                       std::size_t pad, bool need_input_grad) {
  require(input.rank() == 4 && upstream.rank() == 4,
          "conv2d_transpose_backward: tensors must be NCHW");
  require(weight.rank() == 4 && input.dim(1) == weight.dim(0),
          "conv2d_transpose_backward: channel mismatch");
  ConvGeometry g{input.dim(0), weight.dim(1), upstream.dim(2), upstream.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3), 0, 0, stride, pad};
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);
  require(upstream.dim(0) == g.n && upstream.dim(1) == g.c && g.oh == input.dim(2) &&
              g.ow == input.dim(3),
          "conv2d_transpose_backward: upstream shape mismatch");

  ConvGrads<T> grads;
  if (need_input_grad) grads.input = BasicTensor<T>(input.shape());
  OrderedAccumulator<T> dw(g.n, weight.size());
  parallel_for(g.n, [&](std::size_t n) {
    auto& col = scratch<T>(0, g.patch() * g.out_pixels());
    im2col(upstream.data() + n * g.in_plane(), g, col.data());
    const T* y = input.data() + n * g.out_plane();
    detail::gemm(false, true, g.f, g.patch(), g.out_pixels(), y, col.data(), dw.slot(n));
    dw.commit(n);
    if (need_input_grad) {
      detail::gemm(false, false, g.f, g.out_pixels(), g.patch(), weight.data(), col.data(),
                   grads.input.data() + n * g.out_plane());
    }
  });
  grads.weight = BasicTensor<T>(weight.shape(), dw.finish(g.n));
  grads.bias = channel_sums(upstream);
  return grads;
}

// ------------------------------------------------------------------- relu

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  T* o = out.data();
  for (std::size_t i = 0, n = out.size(); i < n; ++i) o[i] = std::max(o[i], T{0});
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
  require(input.shape() == upstream.shape(), "relu_backward: shape mismatch");
  BasicTensor<T> out(input.shape());
  const T* __restrict x = input.data();
  const T* __restrict u = upstream.data();
  T* __restrict o = out.data();
  for (std::size_t i = 0, n = input.size(); i < n; ++i) {
    const T g = u[i];
    o[i] = x[i] > T{0} ? g : T{0};
  }
  return out;
}

// --------------------------------------------------------------- max pool

void check_pool_geometry(const Shape& input_shape, std::size_t size, std::size_t stride) {
  if (input_shape.size() != 4) throw DimensionError("max_pool: input must be NCHW");
  if (stride == 0 || size < stride || (size - stride) % 2 != 0) {
    throw ConfigError("max_pool: window " + std::to_string(size) + " with stride " +
                      std::to_string(stride) + " is not supported");
  }
  if (input_shape[2] % stride != 0 || input_shape[3] % stride != 0) {
    throw ConfigError("max_pool: spatial extent " + std::to_string(input_shape[2]) + "x" +
                      std::to_string(input_shape[3]) + " not divisible by stride " +
                      std::to_string(stride));
  }
}

template <typename T>
PoolResult<T> max_pool(const BasicTensor<T>& input, std::size_t size, std::size_t stride) {
  check_pool_geometry(input.shape(), size, stride);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t pad = (size - stride) / 2;
  const std::size_t oh = h / stride, ow = w / stride;

  PoolResult<T> r;
  r.output = BasicTensor<T>({n, c, oh, ow});
  r.switches = PoolSwitches{std::vector<std::size_t>(n * c * oh * ow), input.shape(),
                            r.output.shape(), size, stride, pad};
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = 0;
        T best_value{};
        bool found = false;
        for (std::size_t i = 0; i < size; ++i) {
          const std::ptrdiff_t iy = std::ptrdiff_t(y * stride + i) - std::ptrdiff_t(pad);
          if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
          for (std::size_t j = 0; j < size; ++j) {
            const std::ptrdiff_t ix = std::ptrdiff_t(x * stride + j) - std::ptrdiff_t(pad);
            if (ix < 0 || ix >= std::ptrdiff_t(w)) continue;
            const std::size_t off = base + std::size_t(iy) * w + std::size_t(ix);
            if (!found || input[off] > best_value) {
              best = off;
              best_value = input[off];
              found = true;
            }
          }
        }
        const std::size_t o = (plane * oh + y) * ow + x;
        r.output[o] = best_value;
        r.switches.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> max_pool_backward(const BasicTensor<T>& upstream, const PoolSwitches& sw) {
  return max_unpool(upstream, sw);
}

template <typename T>
BasicTensor<T> max_unpool(const BasicTensor<T>& input, const PoolSwitches& sw) {
  require(input.shape() == sw.output_shape,
          "max_unpool: input " + shape_string(input.shape()) + " does not match switches " +
              shape_string(sw.output_shape));
  BasicTensor<T> out(sw.input_shape);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const std::size_t off = sw.argmax[i];
    if (off >= out.size()) throw InternalError("max_unpool: switch index out of bounds");
    out[off] += input[i];
  }
  return out;
}

template <typename T>
BasicTensor<T> max_unpool_backward(const BasicTensor<T>& upstream, const PoolSwitches& sw) {
  require(upstream.shape() == sw.input_shape, "max_unpool_backward: upstream shape mismatch");
  BasicTensor<T> out(sw.output_shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t off = sw.argmax[i];
    if (off >= upstream.size()) throw InternalError("max_unpool: switch index out of bounds");
    out[i] = upstream[off];
  }
  return out;
}

// ------------------------------------------------------------- batch norm

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, Mode mode,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                          BatchNormCache<T>* cache) {
  require(input.rank() >= 2, "batch_norm: input must be [N,C,...]");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.size() / (n * c);
  require(gamma.size() == c && beta.size() == c && running_mean.size() == c &&
              running_var.size() == c,
          "batch_norm: parameter length does not match channel count");
  if (mode == Mode::train && n < 2) {
    throw DimensionError("batch_norm: train mode needs a batch of at least 2");
  }

  BasicTensor<T> out(input.shape());
  BasicTensor<T> normalized(input.shape());
  std::vector<T> inv_std(c);
  const double count = double(n * plane);
  parallel_for(c, [&](std::size_t ci) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        s += lane_sum(input.data() + (ni * c + ci) * plane, plane);
      }
      mean = s / count;
      double ss = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        ss += lane_centered_squares(input.data() + (ni * c + ci) * plane, plane, mean);
      }
      var = ss / count;
      running_mean[ci] = T(kBatchNormMomentum * double(running_mean[ci]) +
                           (1.0 - kBatchNormMomentum) * mean);
      running_var[ci] = T(kBatchNormMomentum * double(running_var[ci]) +
                          (1.0 - kBatchNormMomentum) * var * count / (count - 1.0));
    } else {
      mean = double(running_mean[ci]);
      var = double(running_var[ci]);
    }
    const T istd = T(1.0 / std::sqrt(var + kBatchNormEpsilon));
    const T m = T(mean);
    inv_std[ci] = istd;
    const T gm = gamma[ci], bt = beta[ci];
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t base = (ni * c + ci) * plane;
      const T* x = input.data() + base;
      T* xn = normalized.data() + base;
      T* y = out.data() + base;
      for (std::size_t k = 0; k < plane; ++k) {
        const T xh = (x[k] - m) * istd;
        xn[k] = xh;
        y[k] = gm * xh + bt;
      }
    }
  });
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BasicTensor<T>& upstream,
                                      const BasicTensor<T>& gamma,
                                      const BatchNormCache<T>& cache) {
  require(upstream.shape() == cache.normalized.shape(),
          "batch_norm_backward: upstream shape mismatch");
  const std::size_t n = upstream.dim(0), c = upstream.dim(1), plane = upstream.size() / (n * c);
  const double count = double(n * plane);
  BatchNormGrads<T> g{BasicTensor<T>(upstream.shape()), BasicTensor<T>({c}),
                      BasicTensor<T>({c})};
  parallel_for(c, [&](std::size_t ci) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t base = (ni * c + ci) * plane;
      sum_dy += lane_sum(upstream.data() + base, plane);
      sum_dy_xh += lane_dot(upstream.data() + base, cache.normalized.data() + base, plane);
    }
    g.gamma[ci] = T(sum_dy_xh);
    g.beta[ci] = T(sum_dy);
    const double scale = double(gamma[ci]) * double(cache.inv_std[ci]);
    const bool train = cache.mode == Mode::train;
    const double mean_dy = train ? sum_dy / count : 0.0;
    const double mean_dy_xh = train ? sum_dy_xh / count : 0.0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t base = (ni * c + ci) * plane;
      const T* dy = upstream.data() + base;
      const T* xh = cache.normalized.data() + base;
      T* dx = g.input.data() + base;
      for (std::size_t k = 0; k < plane; ++k) {
        dx[k] = T(scale * (double(dy[k]) - mean_dy - double(xh[k]) * mean_dy_xh));
      }
    }
  });
  return g;
}

// ----------------------------------------------------------------- linear

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require(input.rank() == 2 && weight.rank() == 2, "linear: expects [N,D] input, [K,D] weight");
  require(input.dim(1) == weight.dim(1),
          "linear: inner dimension " + std::to_string(input.dim(1)) + " vs " +
              std::to_string(weight.dim(1)));
  require(bias.size() == weight.dim(0), "linear: bias length mismatch");
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  BasicTensor<T> out({n, k});
  // Row-at-a-time so each row's result does not depend on the batch size.
  parallel_for(n, [&](std::size_t i) {
    T* y = out.data() + i * k;
    detail::gemv(false, k, d, weight.data(), input.data() + i * d, y);
    for (std::size_t j = 0; j < k; ++j) y[j] += bias[j];
  });
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& upstream) {
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  require(weight.dim(1) == d && upstream.shape() == Shape{n, k},
          "linear_backward: shape mismatch");
  LinearGrads<T> g{BasicTensor<T>({n, d}), BasicTensor<T>({k, d}), BasicTensor<T>({k})};
  detail::gemm(true, false, k, d, n, upstream.data(), input.data(), g.weight.data());
  detail::gemm(false, false, n, d, k, upstream.data(), weight.data(), g.input.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) g.bias[j] += upstream[i * k + j];
  }
  return g;
}

template <typename T>
BasicTensor<T> linear_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias) {
  require(input.rank() == 2 && weight.rank() == 2 && input.dim(1) == weight.dim(0),
          "linear_transpose: expects [N,K] input with [K,D] weight");
  require(bias.size() == weight.dim(1), "linear_transpose: bias length mismatch");
  const std::size_t n = input.dim(0), k = weight.dim(0), d = weight.dim(1);
  BasicTensor<T> out({n, d});
  parallel_for(n, [&](std::size_t i) {
    T* y = out.data() + i * d;
    detail::gemv(true, d, k, weight.data(), input.data() + i * k, y);
    for (std::size_t j = 0; j < d; ++j) y[j] += bias[j];
  });
  return out;
}

template <typename T>
LinearGrads<T> linear_transpose_backward(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weight,
                                         const BasicTensor<T>& upstream) {
  const std::size_t n = input.dim(0), k = weight.dim(0), d = weight.dim(1);
  require(input.dim(1) == k && upstream.shape() == Shape{n, d},
          "linear_transpose_backward: shape mismatch");
  LinearGrads<T> g{BasicTensor<T>({n, k}), BasicTensor<T>({k, d}), BasicTensor<T>({d})};
  detail::gemm(true, false, k, d, n, input.data(), upstream.data(), g.weight.data());
  detail::gemm(false, true, n, k, d, upstream.data(), weight.data(), g.input.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) g.bias[j] += upstream[i * d + j];
  }
  return g;
}

// ----------------------------------------------------------- L2 normalize

template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& input) {
  require(input.rank() == 2, "l2_normalize_rows: expects [N,K]");
  BasicTensor<T> out = input;
  const std::size_t k = input.dim(1);
  for (std::size_t i = 0; i < input.dim(0); ++i) {
    T* r = out.data() + i * k;
    double ss = 0.0;
    for (std::size_t j = 0; j < k; ++j) ss += double(r[j]) * double(r[j]);
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t j = 0; j < k; ++j) r[j] = T(double(r[j]) * inv);
  }
  return out;
}

template <typename T>
BasicTensor<T> l2_normalize_rows_backward(const BasicTensor<T>& input,
                                          const BasicTensor<T>& output,
                                          const BasicTensor<T>& upstream) {
  require(input.shape() == upstream.shape() && output.shape() == input.shape(),
          "l2_normalize_rows_backward: shape mismatch");
  BasicTensor<T> out = upstream;
  const std::size_t k = input.dim(1);
  for (std::size_t i = 0; i < input.dim(0); ++i) {
    const T* x = input.data() + i * k;
    const T* y = output.data() + i * k;
    const T* dy = upstream.data() + i * k;
    double ss = 0.0, proj = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      ss += double(x[j]) * double(x[j]);
      proj += double(y[j]) * double(dy[j]);
    }
    if (ss == 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    T* dx = out.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      dx[j] = T((double(dy[j]) - double(y[j]) * proj) * inv);
    }
  }
  return out;
}

#define ORBIT_INSTANTIATE_LAYERS(T)                                                         \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                 const BasicTensor<T>&, std::size_t, std::size_t);          \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                        const BasicTensor<T>&, std::size_t, std::size_t,    \
                                        bool);                                              \
  template BasicTensor<T> conv2d_transpose(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                           const BasicTensor<T>&, std::size_t,             \
                                           std::size_t, std::size_t, std::size_t);         \
  template ConvGrads<T> conv2d_transpose_backward(                                         \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,    \
      std::size_t, bool);                                                                   \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template PoolResult<T> max_pool(const BasicTensor<T>&, std::size_t, std::size_t);        \
  template BasicTensor<T> max_pool_backward(const BasicTensor<T>&, const PoolSwitches&);   \
  template BasicTensor<T> max_unpool(const BasicTensor<T>&, const PoolSwitches&);          \
  template BasicTensor<T> max_unpool_backward(const BasicTensor<T>&, const PoolSwitches&); \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                     const BasicTensor<T>&, Mode, BasicTensor<T>&,         \
                                     BasicTensor<T>&, BatchNormCache<T>*);                 \
  template BatchNormGrads<T> batch_norm_backward(const BasicTensor<T>&,                    \
                                                 const BasicTensor<T>&,                    \
                                                 const BatchNormCache<T>&);                \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                 const BasicTensor<T>&);                                    \
  template LinearGrads<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                          const BasicTensor<T>&);                           \
  template BasicTensor<T> linear_transpose(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                           const BasicTensor<T>&);                          \
  template LinearGrads<T> linear_transpose_backward(                                       \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> l2_normalize_rows(const BasicTensor<T>&);                         \
  template BasicTensor<T> l2_normalize_rows_backward(                                      \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

ORBIT_INSTANTIATE_LAYERS(float)
ORBIT_INSTANTIATE_LAYERS(double)

}  // namespace orbit
