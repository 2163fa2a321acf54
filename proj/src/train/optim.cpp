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

#include "orbit/optim.hpp"

#include <cmath>

#include "orbit/error.hpp"
#include "orbit/random.hpp"

namespace orbit {

namespace {
constexpr std::uint64_t kPlanStream = 0x9a7c;
}

void AdamConfig::validate() const {
  if (!(lr >= 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) ||
      !(epsilon > 0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

AdamState make_adam_state(const std::vector<const Tensor*>& params, const AdamConfig& hyper) {
  hyper.validate();
  AdamState s;
  s.hyper = hyper;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

AdamState make_adam_state(const Params& params, const AdamConfig& hyper) {
  return make_adam_state(trainable_tensors(params), hyper);
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape()) {
      throw DimensionError("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
    if (!grads[i]->all_finite()) {
      throw DivergenceError("non-finite gradient in tensor " + std::to_string(i) + " at step " +
                            std::to_string(state.t + 1));
    }
  }
  const AdamConfig& h = state.hyper;
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, double(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, double(state.t));
  const float b1 = float(h.beta1), b2 = float(h.beta2);
  const float step = float(h.lr / c1);
  const float root_c2 = float(std::sqrt(c2));
  const float eps = float(h.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i]->data();
    const float* g = grads[i]->data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t j = 0, n = params[i]->size(); j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      // lr * m_hat / (sqrt(v_hat) + eps), with the corrections folded in.
      p[j] -= step * m[j] / (std::sqrt(v[j]) / root_c2 + eps);
    }
  }
}

void adam_step(Params& params, const Params& grads, AdamState& state) {
  adam_step(trainable_tensors(params), trainable_tensors(grads), state);
}

std::vector<Tensor*> trainable_tensors(Params& params) {
  std::vector<Tensor*> out;
  params.for_each_trainable([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> trainable_tensors(const Params& params) {
  std::vector<const Tensor*> out;
  params.for_each_trainable([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> trainable_names(const Params& params) {
  std::vector<std::string> out;
  params.for_each_trainable([&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

std::vector<std::vector<std::size_t>> plan_batches(const OrbitDataset& dataset,
                                                   const BatchPlan& plan, std::uint64_t epoch) {
  const std::size_t p = plan.orbits_per_batch, k = plan.samples_per_orbit;
  if (p == 0 || k == 0) throw ConfigError("batch plan needs P >= 1 and K >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < dataset.orbit_count(); ++i) {
    if (dataset.orbits()[i].members.size() >= k) eligible.push_back(i);
  }
  if (eligible.size() < p) {
    throw ConfigError("batch plan infeasible: " + std::to_string(eligible.size()) +
                      " orbits have >= " + std::to_string(k) + " members, P = " +
                      std::to_string(p));
  }
  Rng rng(derive_seed(plan.seed, kPlanStream, epoch));
  rng.shuffle(eligible);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start + p <= eligible.size(); start += p) {
    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    for (std::size_t j = start; j < start + p; ++j) {
      std::vector<std::uint32_t> members = dataset.orbits()[eligible[j]].members;
      // Partial Fisher-Yates: the first k entries become a uniform sample.
      for (std::size_t a = 0; a < k; ++a) {
        std::swap(members[a], members[a + rng.below(members.size() - a)]);
        batch.push_back(members[a]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace orbit
