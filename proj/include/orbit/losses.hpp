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

// Training objectives and semi-hard triplet mining. Every loss is a mean
// over its triplets or batch rows and returns the gradient with respect to
// its inputs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orbit/random.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

enum class LossMode { OJ, OT, OE, ST, EX, AE };

std::string to_string(LossMode mode);
/// Accepts the two-letter names, case-insensitive. ConfigError otherwise.
LossMode parse_loss_mode(const std::string& name);

bool uses_triplets(LossMode mode);
bool uses_decoder(LossMode mode);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct LossConfig {
  double alpha = 0.2;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::size_t input_dim = 64 * 64;  // d
  std::size_t embedding_dim = 1024;  // k
  /// false: lambda1/d on the triplet term and lambda2/k on reconstruction.
  /// true: lambda1/k and lambda2/d.
  bool scale_swap = false;

  void validate() const;
  double triplet_weight() const;
  double reconstruction_weight() const;
};

template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b);

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Mean over triplets of max(0, D(a,p) + alpha - D(a,n)). An empty list
/// gives loss 0 and a zero gradient, with a warning.
template <typename T>
LossResult<T> triplet_loss(const BasicTensor<T>& embeddings, const std::vector<Triplet>& triplets,
                           double alpha);

/// Mean over rows of the squared-error sum. Any shapes with equal extents.
template <typename T>
LossResult<T> reconstruction_loss(const BasicTensor<T>& reconstruction,
                                  const BasicTensor<T>& target);

template <typename T>
struct JointLossResult {
  double loss = 0.0;
  double triplet = 0.0;         // unweighted term
  double reconstruction = 0.0;  // unweighted term
  BasicTensor<T> d_embedding;
  BasicTensor<T> d_reconstruction;  // empty when lambda2 == 0
};

/// triplet_weight * L_t + reconstruction_weight * L_e. A zero lambda drops
/// its term entirely (so the reconstruction may be empty when lambda2 == 0).
template <typename T>
JointLossResult<T> orbit_joint_loss(const BasicTensor<T>& embeddings,
                                    const BasicTensor<T>& reconstruction,
                                    const BasicTensor<T>& canonical,
                                    const std::vector<Triplet>& triplets, const LossConfig& cfg);

template <typename T>
struct ExemplarLossResult {
  double loss = 0.0;
  BasicTensor<T> d_embedding;
  BasicTensor<T> d_head_weight;
  BasicTensor<T> d_head_bias;
};

/// Softmax cross-entropy of the linear head (weight [C,k], bias [C]) over
/// surrogate labels in [0, C).
template <typename T>
ExemplarLossResult<T> exemplar_loss(const BasicTensor<T>& embeddings,
                                    const BasicTensor<T>& head_weight,
                                    const BasicTensor<T>& head_bias,
                                    const std::vector<std::size_t>& labels);

/// For each row with an in-batch positive: a uniformly random positive, then
/// a uniformly random semi-hard negative (D(a,p) < D(a,n) < D(a,p) + alpha),
/// falling back to the closest negative.
template <typename T>
std::vector<Triplet> mine_triplets(const BasicTensor<T>& embeddings,
                                   const std::vector<std::int64_t>& ids, double alpha, Rng& rng);

}  // namespace orbit
