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

#pragma once

#include <array>
#include <cstddef>

#include "orbit/random.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

/// One planar affine transformation. Rotation in degrees, shear along x.
struct AffineParams {
  double rotation = 0.0;
  double shear = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  static AffineParams identity() { return {}; }
};

/// Sampling intervals of the augmentation.
struct AffineRanges {
  double max_rotation = 90.0;
  double max_shear = 0.3;
  double min_scale = 0.7;
  double max_scale = 1.3;
  double max_translation = 15.0;
};

/// Draws each parameter independently and uniformly from its interval.
AffineParams sample_affine(Rng& rng, const AffineRanges& ranges = {});

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Inverse-warp matrix mapping output pixel coordinates (x = column,
/// y = row) to input coordinates. The forward map is
/// translate(-center) -> scale -> shear -> rotate -> translate(center + t),
/// with center = (S-1)/2. Throws SingularMatrixError for scale 0.
Matrix3 affine_matrix(const AffineParams& params, std::size_t canvas);

/// Bilinear resampling of a [1,H,W] image through `inverse`; samples that
/// fall outside the image read as 0. Output is clamped to [0,1].
Tensor warp_bilinear(const Tensor& image, const Matrix3& inverse);

}  // namespace orbit
