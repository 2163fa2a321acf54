#pragma once

#include <cstddef>

#include "orbit/random.hpp"
#include "orbit/tensor.hpp"

namespace orbit::testing {

template <typename T = double>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return generate_tensor<T>(std::move(shape), [&] { return rng.uniform(lo, hi); });
}

/// Direct nested-loop cross-correlation with zero padding.
inline Tensor64 reference_conv2d(const Tensor64& x, const Tensor64& w, const Tensor64& b,
                                 std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor64 out({n, f, oh, ow});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double s = b[fi];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = long(y * stride + i) - long(pad);
                const long ix = long(xo * stride + j) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                s += x.at(ni, ci, std::size_t(iy), std::size_t(ix)) * w.at(fi, ci, i, j);
              }
          out.at(ni, fi, y, xo) = s;
        }
  return out;
}

}  // namespace orbit::testing
