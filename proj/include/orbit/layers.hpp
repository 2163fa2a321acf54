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

// Differentiable layer kernels. Each forward function has a matching
// hand-written backward; all are templated on the scalar type and
// instantiated for float and double.

#include <cstddef>
#include <vector>

#include "orbit/tensor.hpp"

namespace orbit {

enum class Mode { train, infer };

// ---------------------------------------------------------------- conv2d

/// Output extent of a convolution along one spatial axis.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

/// Cross-correlation with zero padding.
/// input [N,C,H,W], weight [F,C,kh,kw], bias [F] -> [N,F,H',W'].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad);

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;  // empty when not requested
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& upstream, std::size_t stride,
                             std::size_t pad, bool need_input_grad = true);

/// Adjoint of conv2d's linear map, reusing the conv weight [F,C,kh,kw]:
/// input [N,F,H',W'], bias [C] -> [N,C,H,W]. When out_h/out_w are 0 the
/// extents are (H'-1)*stride - 2*pad + k.
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride,
                                std::size_t pad, std::size_t out_h = 0,
                                std::size_t out_w = 0);

template <typename T>
ConvGrads<T> conv2d_transpose_backward(const BasicTensor<T>& input,
                                       const BasicTensor<T>& weight,
                                       const BasicTensor<T>& upstream, std::size_t stride,
                                       std::size_t pad, bool need_input_grad = true);

// ------------------------------------------------------------------ relu

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Passes upstream where input > 0 (subgradient 0 at exactly 0).
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

// ------------------------------------------------------------- max pool

struct PoolSwitches {
  std::vector<std::size_t> argmax;  // flat offsets into the pooled input
  Shape input_shape;
  Shape output_shape;
  std::size_t size = 0;
  std::size_t stride = 0;
  std::size_t pad = 0;
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  PoolSwitches switches;
};

/// Throws ConfigError unless H and W are divisible by `stride`. Windows
/// larger than the stride are padded by (size-stride)/2 so the output is
/// exactly H/stride x W/stride; padded cells never win.
void check_pool_geometry(const Shape& input_shape, std::size_t size, std::size_t stride);

template <typename T>
PoolResult<T> max_pool(const BasicTensor<T>& input, std::size_t size, std::size_t stride);

/// Routes upstream to the recorded argmax positions (accumulating where
/// windows overlap).
template <typename T>
BasicTensor<T> max_pool_backward(const BasicTensor<T>& upstream, const PoolSwitches& sw);

/// Places each value at its recorded offset; zeros elsewhere.
template <typename T>
BasicTensor<T> max_unpool(const BasicTensor<T>& input, const PoolSwitches& sw);

/// Gathers upstream from the switch positions.
template <typename T>
BasicTensor<T> max_unpool_backward(const BasicTensor<T>& upstream, const PoolSwitches& sw);

// ------------------------------------------------------------ batch norm

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// What batch_norm_backward needs from the forward pass.
template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  BasicTensor<T> normalized;  // x_hat
  std::vector<T> inv_std;     // per channel
};

/// Per-channel standardization over every non-channel axis of
/// [N,C,...] (or [N,C]), followed by gamma/beta. Train mode uses batch
/// statistics and folds them into the running mean/variance with momentum
/// 0.9 (unbiased variance); infer mode reads the running statistics.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, Mode mode,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                          BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BasicTensor<T>& upstream,
                                      const BasicTensor<T>& gamma,
                                      const BatchNormCache<T>& cache);

// ---------------------------------------------------------------- linear

/// input [N,D], weight [K,D], bias [K] -> [N,K].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <typename T>
struct LinearGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& upstream);

/// Tied transposed linear map used by the decoder: input [N,K] with the
/// encoder weight [K,D] and a free bias [D] -> [N,D].
template <typename T>
BasicTensor<T> linear_transpose(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias);

template <typename T>
LinearGrads<T> linear_transpose_backward(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weight,
                                         const BasicTensor<T>& upstream);

// ------------------------------------------------------ row L2 normalize

/// Scales each row of [N,K] to unit Euclidean norm; zero rows pass through.
template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> l2_normalize_rows_backward(const BasicTensor<T>& input,
                                          const BasicTensor<T>& output,
                                          const BasicTensor<T>& upstream);

}  // namespace orbit
