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

#include "orbit/affine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "orbit/error.hpp"

namespace orbit {

AffineParams sample_affine(Rng& rng, const AffineRanges& r) {
  AffineParams p;
  p.rotation = rng.uniform(-r.max_rotation, r.max_rotation);
  p.shear = rng.uniform(-r.max_shear, r.max_shear);
  p.scale = rng.uniform(r.min_scale, r.max_scale);
  p.tx = rng.uniform(-r.max_translation, r.max_translation);
  p.ty = rng.uniform(-r.max_translation, r.max_translation);
  return p;
}

Matrix3 affine_matrix(const AffineParams& p, std::size_t canvas) {
  const double theta = p.rotation * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  // A = R * Sh * Sc
  const double a00 = c * p.scale, a01 = (c * p.shear - s) * p.scale;
  const double a10 = s * p.scale, a11 = (s * p.shear + c) * p.scale;
  const double det = a00 * a11 - a01 * a10;
  if (det == 0.0 || !std::isfinite(det)) {
    throw SingularMatrixError("affine transformation is not invertible");
  }
  const double i00 = a11 / det, i01 = -a01 / det;
  const double i10 = -a10 / det, i11 = a00 / det;
  const double center = (double(canvas) - 1.0) / 2.0;
  // input = center + A^-1 (output - center - t)
  const double ox = center + p.tx, oy = center + p.ty;
  Matrix3 m{};
  m[0] = {i00, i01, center - (i00 * ox + i01 * oy)};
  m[1] = {i10, i11, center - (i10 * ox + i11 * oy)};
  m[2] = {0.0, 0.0, 1.0};
  return m;
}

Tensor warp_bilinear(const Tensor& image, const Matrix3& m) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw DimensionError("warp_bilinear expects a [1,H,W] image, got " +
                         shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  auto pixel = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) return 0.0;
    return double(image[std::size_t(y) * w + std::size_t(x)]);
  };
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = m[0][0] * double(x) + m[0][1] * double(y) + m[0][2];
      const double v = m[1][0] * double(x) + m[1][1] * double(y) + m[1][2];
      const double fu = std::floor(u), fv = std::floor(v);
      const long x0 = long(fu), y0 = long(fv);
      const double ax = u - fu, ay = v - fv;
      double value = (1.0 - ay) * ((1.0 - ax) * pixel(y0, x0) + ax * pixel(y0, x0 + 1)) +
                     ay * ((1.0 - ax) * pixel(y0 + 1, x0) + ax * pixel(y0 + 1, x0 + 1));
      out[y * w + x] = float(std::clamp(value, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace orbit
