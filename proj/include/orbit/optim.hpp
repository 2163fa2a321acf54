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

#include <cstdint>
#include <string>
#include <vector>

#include "orbit/key_values.hpp"
#include "orbit/network.hpp"
#include "orbit/orbit_dataset.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamConfig hyper;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(const std::vector<const Tensor*>& params, const AdamConfig& hyper);
AdamState make_adam_state(const Params& params, const AdamConfig& hyper);

/// One bias-corrected update. Throws DivergenceError (leaving params and
/// state untouched) if any gradient is not finite.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state);
void adam_step(Params& params, const Params& grads, AdamState& state);

std::vector<Tensor*> trainable_tensors(Params& params);
std::vector<const Tensor*> trainable_tensors(const Params& params);
std::vector<std::string> trainable_names(const Params& params);

struct BatchPlan {
  std::size_t orbits_per_batch = 64;   // P
  std::size_t samples_per_orbit = 4;   // K
  std::uint64_t seed = 0;

  std::size_t batch_size() const { return orbits_per_batch * samples_per_orbit; }
};

/// Batches of P distinct orbits x K distinct members each, orbit-major.
/// Orbits with at least K members are permuted with a generator derived
/// from (plan.seed, epoch); each is used at most once and the incomplete
/// tail is dropped. Throws ConfigError if fewer than P orbits qualify.
std::vector<std::vector<std::size_t>> plan_batches(const OrbitDataset& dataset,
                                                   const BatchPlan& plan, std::uint64_t epoch);

}  // namespace orbit
