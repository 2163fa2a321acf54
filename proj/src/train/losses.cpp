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

#include "orbit/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "orbit/error.hpp"
#include "orbit/layers.hpp"
#include "orbit/log.hpp"

namespace orbit {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::OJ: return "OJ";
    case LossMode::OT: return "OT";
    case LossMode::OE: return "OE";
    case LossMode::ST: return "ST";
    case LossMode::EX: return "EX";
    case LossMode::AE: return "AE";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& name) {
  std::string upper = name;
  for (char& ch : upper) ch = char(std::toupper(static_cast<unsigned char>(ch)));
  for (LossMode m : {LossMode::OJ, LossMode::OT, LossMode::OE, LossMode::ST, LossMode::EX,
                     LossMode::AE}) {
    if (to_string(m) == upper) return m;
  }
  throw ConfigError("unknown loss mode '" + name + "' (expected OJ, OT, OE, ST, EX or AE)");
}

bool uses_triplets(LossMode mode) {
  return mode == LossMode::OJ || mode == LossMode::OT || mode == LossMode::ST;
}

bool uses_decoder(LossMode mode) {
  return mode == LossMode::OJ || mode == LossMode::OE || mode == LossMode::AE;
}

void LossConfig::validate() const {
  if (!(alpha > 0)) throw ConfigError("margin alpha must be positive");
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ConfigError("lambda weights must be >= 0");
  if (input_dim == 0 || embedding_dim == 0) throw ConfigError("loss dimensions must be positive");
}

double LossConfig::triplet_weight() const {
  return lambda1 / double(scale_swap ? embedding_dim : input_dim);
}

double LossConfig::reconstruction_weight() const {
  return lambda2 / double(scale_swap ? input_dim : embedding_dim);
}

template <typename T>
double squared_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw DimensionError("squared_distance: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s;
}

template <typename T>
LossResult<T> triplet_loss(const BasicTensor<T>& embeddings, const std::vector<Triplet>& triplets,
                           double alpha) {
  if (embeddings.rank() != 2) throw DimensionError("triplet_loss: embeddings must be [N,k]");
  LossResult<T> out{0.0, BasicTensor<T>(embeddings.shape())};
  if (triplets.empty()) {
    log::warn("triplet loss called with no triplets");
    return out;
  }
  const std::size_t n = embeddings.dim(0), k = embeddings.dim(1);
  const double scale = 1.0 / double(triplets.size());
  for (const Triplet& t : triplets) {
    if (t.anchor >= n || t.positive >= n || t.negative >= n) {
      throw DimensionError("triplet index out of range");
    }
    auto a = embeddings.row(t.anchor), p = embeddings.row(t.positive),
         q = embeddings.row(t.negative);
    const double hinge = squared_distance(a, p) + alpha - squared_distance(a, q);
    if (hinge <= 0) continue;
    out.loss += hinge;
    auto ga = out.grad.row(t.anchor), gp = out.grad.row(t.positive), gq = out.grad.row(t.negative);
    for (std::size_t j = 0; j < k; ++j) {
      const double ap = double(a[j]) - double(p[j]);
      const double aq = double(a[j]) - double(q[j]);
      ga[j] += T(2.0 * scale * (ap - aq));
      gp[j] += T(-2.0 * scale * ap);
      gq[j] += T(2.0 * scale * aq);
    }
  }
  out.loss *= scale;
  return out;
}

template <typename T>
LossResult<T> reconstruction_loss(const BasicTensor<T>& reconstruction,
                                  const BasicTensor<T>& target) {
  if (reconstruction.size() != target.size() || reconstruction.empty() ||
      reconstruction.dim(0) != target.dim(0)) {
    throw DimensionError("reconstruction_loss: shapes " + shape_string(reconstruction.shape()) +
                         " and " + shape_string(target.shape()));
  }
  const double n = double(reconstruction.dim(0));
  LossResult<T> out{0.0, BasicTensor<T>(reconstruction.shape())};
  for (std::size_t i = 0; i < reconstruction.size(); ++i) {
    const double d = double(reconstruction[i]) - double(target[i]);
    out.loss += d * d;
    out.grad[i] = T(2.0 * d / n);
  }
  out.loss /= n;
  return out;
}

template <typename T>
JointLossResult<T> orbit_joint_loss(const BasicTensor<T>& embeddings,
                                    const BasicTensor<T>& reconstruction,
                                    const BasicTensor<T>& canonical,
                                    const std::vector<Triplet>& triplets, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.lambda1 == 0 && cfg.lambda2 == 0) {
    throw ConfigError("lambda1 and lambda2 are both zero");
  }
  JointLossResult<T> out;
  out.d_embedding = BasicTensor<T>(embeddings.shape());
  if (cfg.lambda1 > 0) {
    const double w = cfg.triplet_weight();
    LossResult<T> t = triplet_loss(embeddings, triplets, cfg.alpha);
    out.triplet = t.loss;
    out.loss = w * t.loss;
    for (std::size_t i = 0; i < t.grad.size(); ++i) out.d_embedding[i] = T(w * t.grad[i]);
  }
  if (cfg.lambda2 > 0) {
    const double w = cfg.reconstruction_weight();
    LossResult<T> r = reconstruction_loss(reconstruction, canonical);
    out.reconstruction = r.loss;
    out.loss += w * r.loss;
    out.d_reconstruction = std::move(r.grad);
    for (T& v : out.d_reconstruction.values()) v = T(w * v);
  }
  return out;
}

template <typename T>
ExemplarLossResult<T> exemplar_loss(const BasicTensor<T>& embeddings,
                                    const BasicTensor<T>& head_weight,
                                    const BasicTensor<T>& head_bias,
                                    const std::vector<std::size_t>& labels) {
  const std::size_t n = embeddings.dim(0), classes = head_weight.dim(0);
  if (labels.size() != n) throw DimensionError("exemplar_loss: one label per row required");
  BasicTensor<T> logits = linear(embeddings, head_weight, head_bias);
  BasicTensor<T> dlogits(logits.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes) {
      throw LabelError("surrogate label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    auto z = logits.row(i);
    const double top = double(*std::max_element(z.begin(), z.end()));
    double sum = 0.0;
    for (T v : z) sum += std::exp(double(v) - top);
    const double log_sum = top + std::log(sum);
    loss += log_sum - double(z[labels[i]]);
    auto g = dlogits.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(double(z[c]) - log_sum);
      g[c] = T((p - (c == labels[i] ? 1.0 : 0.0)) / double(n));
    }
  }
  LinearGrads<T> lg = linear_backward(embeddings, head_weight, dlogits);
  return {loss / double(n), std::move(lg.input), std::move(lg.weight), std::move(lg.bias)};
}

template <typename T>
std::vector<Triplet> mine_triplets(const BasicTensor<T>& embeddings,
                                   const std::vector<std::int64_t>& ids, double alpha, Rng& rng) {
  const std::size_t n = embeddings.dim(0);
  if (ids.size() != n) throw DimensionError("mine_triplets: one id per row required");
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = squared_distance(embeddings.row(i), embeddings.row(j));
    }
  }
  std::vector<Triplet> out;
  std::vector<std::size_t> positives, candidates;
  for (std::size_t a = 0; a < n; ++a) {
    positives.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != a && ids[j] == ids[a]) positives.push_back(j);
    }
    if (positives.empty()) continue;
    const std::size_t p = positives[rng.below(positives.size())];
    const double dap = dist[a * n + p];
    candidates.clear();
    std::size_t hardest = n;
    double hardest_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (ids[j] == ids[a]) continue;
      const double d = dist[a * n + j];
      if (dap < d && d < dap + alpha) candidates.push_back(j);
      if (d < hardest_d) {
        hardest_d = d;
        hardest = j;
      }
    }
    if (hardest == n) continue;  // no negatives in the batch
    const std::size_t q = candidates.empty() ? hardest : candidates[rng.below(candidates.size())];
    out.push_back({a, p, q});
  }
  return out;
}

#define ORBIT_INSTANTIATE(T)                                                                    \
  template double squared_distance(std::span<const T>, std::span<const T>);                     \
  template LossResult<T> triplet_loss(const BasicTensor<T>&, const std::vector<Triplet>&,       \
                                      double);                                                  \
  template LossResult<T> reconstruction_loss(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template JointLossResult<T> orbit_joint_loss(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                               const BasicTensor<T>&,                           \
                                               const std::vector<Triplet>&, const LossConfig&); \
  template ExemplarLossResult<T> exemplar_loss(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                               const BasicTensor<T>&,                           \
                                               const std::vector<std::size_t>&);                \
  template std::vector<Triplet> mine_triplets(const BasicTensor<T>&,                            \
                                              const std::vector<std::int64_t>&, double, Rng&);

ORBIT_INSTANTIATE(float)
ORBIT_INSTANTIATE(double)

}  // namespace orbit
