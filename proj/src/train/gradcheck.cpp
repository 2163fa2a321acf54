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

#include "orbit/gradcheck.hpp"

#include "orbit/layers.hpp"
#include "orbit/losses.hpp"
#include "orbit/network.hpp"
#include "orbit/random.hpp"
#include "orbit/trainer.hpp"

namespace orbit {
namespace {

constexpr double kLinearTolerance = 1e-5;
constexpr double kTolerance = 1e-4;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor64 random(Shape shape, double lo = -1.0, double hi = 1.0) {
    return generate_tensor<double>(std::move(shape), [&] { return rng_.uniform(lo, hi); });
  }

  // Values bounded away from zero, so ReLU kinks are never crossed.
  Tensor64 away_from_zero(Shape shape) {
    return generate_tensor<double>(std::move(shape), [&] {
      const double m = rng_.uniform(0.1, 1.0);
      return rng_.uniform() < 0.5 ? -m : m;
    });
  }

  void check(const std::string& name, double tol, const Tensor64& analytic, Tensor64& x,
             const std::function<double()>& loss, const std::function<bool()>& stable = {}) {
    const GradComparison c = compare_gradients(analytic, numeric_gradient(x, loss,
                                                                          kGradCheckStep, stable));
    results_.push_back({name, c.max_rel_error, tol, c.compared, c.skipped});
  }

  void check_result(GradCheckResult r) { results_.push_back(std::move(r)); }
  std::vector<GradCheckResult> take() { return std::move(results_); }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  std::vector<GradCheckResult> results_;
};

void check_kernels(Suite& s) {
  {
    Tensor64 x = s.random({2, 3, 5, 5}), w = s.random({4, 3, 3, 3}), b = s.random({4});
    const Tensor64 r = s.random({2, 4, 5, 5});
    auto loss = [&] { return dot(r, conv2d(x, w, b, 1, 1)); };
    const ConvGrads<double> g = conv2d_backward(x, w, r, 1, 1);
    s.check("conv2d.input", kLinearTolerance, g.input, x, loss);
    s.check("conv2d.weight", kLinearTolerance, g.weight, w, loss);
    s.check("conv2d.bias", kLinearTolerance, g.bias, b, loss);
  }
  {
    Tensor64 y = s.random({2, 4, 5, 5}), w = s.random({4, 3, 3, 3}), b = s.random({3});
    const Tensor64 r = s.random({2, 3, 5, 5});
    auto loss = [&] { return dot(r, conv2d_transpose(y, w, b, 1, 1)); };
    const ConvGrads<double> g = conv2d_transpose_backward(y, w, r, 1, 1);
    s.check("conv2d_transpose.input", kLinearTolerance, g.input, y, loss);
    s.check("conv2d_transpose.weight", kLinearTolerance, g.weight, w, loss);
    s.check("conv2d_transpose.bias", kLinearTolerance, g.bias, b, loss);
  }
  {
    Tensor64 x = s.away_from_zero({2, 3, 4, 4});
    const Tensor64 r = s.random(x.shape());
    s.check("relu", kTolerance, relu_backward(x, r), x, [&] { return dot(r, relu(x)); });
  }
  {
    Tensor64 x = s.random({2, 2, 8, 8});
    const PoolResult<double> p = max_pool(x, 2, 2);
    const Tensor64 r = s.random(p.output.shape());
    const auto base = p.switches.argmax;
    s.check("max_pool", kTolerance, max_pool_backward(r, p.switches), x,
            [&] { return dot(r, max_pool(x, 2, 2).output); },
            [&] { return max_pool(x, 2, 2).switches.argmax == base; });
  }
  {
    Tensor64 x = s.random({2, 2, 8, 8});
    const PoolSwitches sw = max_pool(x, 2, 2).switches;
    Tensor64 y = s.random({2, 2, 4, 4});
    const Tensor64 r = s.random(x.shape());
    s.check("max_unpool", kTolerance, max_unpool_backward(r, sw), y,
            [&] { return dot(r, max_unpool(y, sw)); });
  }
  for (Mode mode : {Mode::train, Mode::infer}) {
    const std::string tag = mode == Mode::train ? "train" : "infer";
    Tensor64 x = s.random({3, 2, 3, 3}), gamma = s.random({2}, 0.5, 1.5), beta = s.random({2});
    const Tensor64 mean0 = s.random({2}), var0 = s.random({2}, 0.5, 1.5);
    const Tensor64 r = s.random(x.shape());
    auto loss = [&] {
      Tensor64 m = mean0, v = var0;
      return dot(r, batch_norm(x, gamma, beta, mode, m, v));
    };
    Tensor64 m = mean0, v = var0;
    BatchNormCache<double> cache;
    batch_norm(x, gamma, beta, mode, m, v, &cache);
    const BatchNormGrads<double> g = batch_norm_backward(r, gamma, cache);
    s.check("batch_norm." + tag + ".input", kTolerance, g.input, x, loss);
    s.check("batch_norm." + tag + ".gamma", kTolerance, g.gamma, gamma, loss);
    s.check("batch_norm." + tag + ".beta", kTolerance, g.beta, beta, loss);
  }
  {
    Tensor64 x = s.random({3, 6}), w = s.random({4, 6}), b = s.random({4});
    const Tensor64 r = s.random({3, 4});
    auto loss = [&] { return dot(r, linear(x, w, b)); };
    const LinearGrads<double> g = linear_backward(x, w, r);
    s.check("linear.input", kLinearTolerance, g.input, x, loss);
    s.check("linear.weight", kLinearTolerance, g.weight, w, loss);
    s.check("linear.bias", kLinearTolerance, g.bias, b, loss);
  }
  {
    Tensor64 z = s.random({3, 4}), w = s.random({4, 6}), b = s.random({6});
    const Tensor64 r = s.random({3, 6});
    auto loss = [&] { return dot(r, linear_transpose(z, w, b)); };
    const LinearGrads<double> g = linear_transpose_backward(z, w, r);
    s.check("linear_transpose.input", kLinearTolerance, g.input, z, loss);
    s.check("linear_transpose.weight", kLinearTolerance, g.weight, w, loss);
    s.check("linear_transpose.bias", kLinearTolerance, g.bias, b, loss);
  }
  {
    Tensor64 a = s.random({3, 5});
    const Tensor64 r = s.random({3, 5});
    const Tensor64 out = l2_normalize_rows(a);
    s.check("l2_normalize", kTolerance, l2_normalize_rows_backward(a, out, r), a,
            [&] { return dot(r, l2_normalize_rows(a)); });
  }
  {
    Tensor64 e = s.random({4, 3});
    const std::vector<Triplet> t{{0, 1, 2}, {1, 0, 3}, {2, 3, 1}, {3, 2, 0}};
    auto active = [&] {
      std::vector<bool> on;
      for (const Triplet& tr : t) {
        on.push_back(squared_distance<double>(e.row(tr.anchor), e.row(tr.positive)) -
                         squared_distance<double>(e.row(tr.anchor), e.row(tr.negative)) + 0.5 >
                     0);
      }
      return on;
    };
    const auto base = active();
    s.check("triplet_loss", kTolerance, triplet_loss(e, t, 0.5).grad, e,
            [&] { return triplet_loss(e, t, 0.5).loss; }, [&] { return active() == base; });
  }
  {
    Tensor64 out = s.random({3, 1, 4, 4});
    const Tensor64 target = s.random(out.shape());
    s.check("reconstruction_loss", kLinearTolerance, reconstruction_loss(out, target).grad, out,
            [&] { return reconstruction_loss(out, target).loss; });
  }
  {
    Tensor64 e = s.random({4, 3}), w = s.random({5, 3}), b = s.random({5});
    const std::vector<std::size_t> labels{0, 4, 2, 2};
    auto loss = [&] { return exemplar_loss(e, w, b, labels).loss; };
    const ExemplarLossResult<double> g = exemplar_loss(e, w, b, labels);
    s.check("exemplar_loss.embedding", kTolerance, g.d_embedding, e, loss);
    s.check("exemplar_loss.head_weight", kTolerance, g.d_head_weight, w, loss);
    s.check("exemplar_loss.head_bias", kTolerance, g.d_head_bias, b, loss);
  }
}

void check_mode(Suite& s, LossMode mode, std::uint64_t seed) {
  NetworkConfig net;
  net.canvas = 8;
  net.channels = {2, 4};
  net.embedding_dim = 8;
  net.seed = seed;
  Params64 params = init_params(net).cast<double>();
  if (mode == LossMode::EX) attach_exemplar_head(params, 2, seed);

  MiniBatch<double> batch;
  batch.inputs = s.random({4, 1, 8, 8}, 0.0, 1.0);
  batch.ids = {0, 0, 1, 1};
  batch.labels = {0, 0, 1, 1};
  if (mode == LossMode::AE) batch.targets = batch.inputs;
  if (mode == LossMode::OE || mode == LossMode::OJ) batch.targets = s.random({4, 1, 8, 8}, 0, 1);
  LossConfig cfg;
  cfg.input_dim = 64;
  cfg.embedding_dim = 8;
  const std::vector<Triplet> triplets{{0, 1, 2}, {1, 0, 3}, {2, 3, 0}, {3, 2, 1}};

  // Everything the piecewise-smooth loss branches on.
  auto signature = [&] {
    Params64 copy = params;
    ForwardRecord<double> rec = encode(copy, batch.inputs, Mode::train);
    if (uses_decoder(mode)) decode(copy, rec);
    std::string sig = activation_signature(rec);
    if (uses_triplets(mode)) {
      for (const Triplet& t : triplets) {
        const double h =
            squared_distance<double>(rec.embedding.row(t.anchor), rec.embedding.row(t.positive)) -
            squared_distance<double>(rec.embedding.row(t.anchor), rec.embedding.row(t.negative)) +
            cfg.alpha;
        sig += h > 0 ? '1' : '0';
      }
    }
    return sig;
  };
  auto loss = [&] {
    Params64 copy = params;
    return loss_and_gradients(copy, batch, mode, cfg, nullptr, &triplets, false).loss;
  };

  Params64 copy = params;
  const StepOutput<double> step = loss_and_gradients(copy, batch, mode, cfg, nullptr, &triplets);
  std::vector<const Tensor64*> analytic;
  step.grads.for_each_trainable(
      [&](const std::string&, const Tensor64& t) { analytic.push_back(&t); });
  const std::string base = signature();
  auto stable = [&] { return signature() == base; };

  // One aggregated entry per mode.
  GradCheckResult total{"mode." + to_string(mode), 0.0, kTolerance, 0, 0};
  std::size_t i = 0;
  params.for_each_trainable([&](const std::string&, Tensor64& t) {
    const GradComparison c =
        compare_gradients(*analytic[i++], numeric_gradient(t, loss, kGradCheckStep, stable));
    total.max_rel_error = std::max(total.max_rel_error, c.max_rel_error);
    total.compared += c.compared;
    total.skipped += c.skipped;
  });
  s.check_result(total);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(const GradSuiteOptions& options) {
  Suite suite(options.seed);
  check_kernels(suite);
  for (LossMode mode : {LossMode::OJ, LossMode::OT, LossMode::OE, LossMode::ST, LossMode::EX,
                        LossMode::AE}) {
    check_mode(suite, mode, derive_seed(options.seed, 0x6c4d, std::uint64_t(mode)));
  }
  return suite.take();
}

}  // namespace orbit
