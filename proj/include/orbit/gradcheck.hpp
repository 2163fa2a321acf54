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

// Central finite-difference checking. The numeric side only ever evaluates
// forward functions, so it stays independent of every hand-written backward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "orbit/tensor.hpp"

namespace orbit {

inline constexpr double kGradCheckStep = 1e-5;

/// Denominator floor of the relative error, so that coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
inline constexpr double kGradCheckFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences of `loss` w.r.t. every entry of `x` (perturbed in
/// place and restored). When `stable` is given, coordinates for which it
/// returns false after either perturbation are marked NaN (skipped).
inline Tensor64 numeric_gradient(Tensor64& x, const std::function<double()>& loss,
                                 double step = kGradCheckStep,
                                 const std::function<bool()>& stable = {}) {
  Tensor64 grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double plus = loss();
    const bool plus_ok = !stable || stable();
    x[i] = saved - step;
    const double minus = loss();
    const bool minus_ok = !stable || stable();
    x[i] = saved;
    grad[i] = (plus_ok && minus_ok) ? (plus - minus) / (2.0 * step) : std::nan("");
  }
  return grad;
}

struct GradComparison {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped = 0;
};

/// Max relative error over coordinates whose numeric value is not NaN.
inline GradComparison compare_gradients(const Tensor64& analytic, const Tensor64& numeric) {
  GradComparison c;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    if (std::isnan(numeric[i])) {
      ++c.skipped;
      continue;
    }
    c.max_rel_error = std::max(c.max_rel_error, relative_error(analytic[i], numeric[i]));
    ++c.compared;
  }
  return c;
}

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t compared = 0;
  std::size_t skipped = 0;
  bool passed() const { return compared > 0 && max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 1234;
};

/// Runs every layer kernel and every loss mode (through a tiny canvas-8
/// network, channels 2 -> 4, k = 8) against central finite differences.
std::vector<GradCheckResult> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace orbit
