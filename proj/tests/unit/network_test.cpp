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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "orbit/checkpoint.hpp"
#include "orbit/error.hpp"
#include "orbit/gradcheck.hpp"
#include "orbit/network.hpp"
#include "test_util.hpp"

namespace orbit {
namespace {

using testing::random_tensor;

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.canvas = 8;
  c.channels = {2, 4};
  c.embedding_dim = 8;
  c.seed = 11;
  return c;
}

// Gives every parameter a non-degenerate value so that the gradient check
// is not trivially satisfied by zero biases and unit gammas.
Params64 perturbed_tiny(std::uint64_t seed, bool normalize = true) {
  NetworkConfig c = tiny_config();
  c.normalize_embedding = normalize;
  Params64 p = init_params(c).cast<double>();
  Rng rng(seed);
  p.for_each_trainable([&](const std::string& name, Tensor64& t) {
    for (double& v : t.values()) {
      if (name.find("gamma") != std::string::npos) v = rng.uniform(0.5, 1.5);
      else if (name.find("weight") == std::string::npos) v = rng.uniform(-0.2, 0.2);
    }
  });
  return p;
}

TEST(NetworkConfigTest, RejectsIndivisibleCanvas) {
  NetworkConfig c = tiny_config();
  c.canvas = 10;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.channels = {};
  EXPECT_THROW(init_params(c), ConfigError);
  c = tiny_config();
  c.channels = {2, 0};
  EXPECT_THROW(init_params(c), ConfigError);
}

TEST(NetworkConfigTest, KeyValueRoundTrip) {
  NetworkConfig c = tiny_config();
  c.normalize_embedding = false;
  const NetworkConfig back = NetworkConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(back.canvas, 8u);
  EXPECT_EQ(back.channels, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(back.embedding_dim, 8u);
  EXPECT_FALSE(back.normalize_embedding);
  EXPECT_EQ(back.seed, 11u);
}

TEST(InitTest, SameSeedSameParams) {
  NetworkConfig c;
  const Params a = init_params(c), b = init_params(c);
  a.for_each_trainable([&](const std::string& name, const Tensor& t) {
    const Tensor* other = nullptr;
    b.for_each_trainable([&](const std::string& n2, const Tensor& t2) {
      if (n2 == name) other = &t2;
    });
    ASSERT_NE(other, nullptr);
    EXPECT_TRUE(t == *other) << name;
  });
  c.seed = 1;
  EXPECT_FALSE(init_params(c).convs[0].weight == a.convs[0].weight);
}

TEST(InitTest, HeVarianceFor16ChannelLayer) {
  // conv2 of the default net is 32 x 16 x 3 x 3 (fan_in 144, 4608 entries);
  // conv3 is 32 x 32 x 3 x 3. Pool several seeds to pass 10^4 entries.
  double sum = 0, sq = 0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    NetworkConfig c;
    c.seed = seed;
    const Params p = init_params(c);
    const Tensor& w = p.convs[2].weight;
    ASSERT_EQ(w.shape(), (Shape{32, 16, 3, 3}));
    for (float v : w.values()) {
      sum += v;
      sq += double(v) * v;
      ++count;
    }
  }
  ASSERT_GE(count, 10000u);
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  const double expected = 2.0 / 144.0;
  EXPECT_NEAR(var, expected, 0.2 * expected);
  EXPECT_NEAR(mean, 0.0, 0.01);
}

TEST(InitTest, BiasesZeroGammaOne) {
  const Params p = init_params(tiny_config());
  for (std::size_t l = 0; l < p.convs.size(); ++l) {
    for (float v : p.convs[l].bias.values()) EXPECT_EQ(v, 0.0f);
    for (float v : p.norms[l].gamma.values()) EXPECT_EQ(v, 1.0f);
    for (float v : p.norms[l].beta.values()) EXPECT_EQ(v, 0.0f);
  }
  for (float v : p.fc_bias.values()) EXPECT_EQ(v, 0.0f);
}

TEST(EncodeTest, DefaultNetShapeAndFiniteOnZeroInput) {
  Params p = init_params(NetworkConfig{});
  const Tensor zero({2, 1, 64, 64});
  const ForwardRecord<float> rec = encode(p, zero);
  EXPECT_EQ(rec.embedding.shape(), (Shape{2, 1024}));
  EXPECT_TRUE(rec.embedding.all_finite());
  EXPECT_EQ(p.config.flat_dim(), 128u * 4 * 4);
}

TEST(EncodeTest, NormalizedRowsHaveUnitNorm) {
  Params p = init_params(NetworkConfig{});
  Rng rng(3);
  const Tensor x = random_tensor<float>({4, 1, 64, 64}, rng, 0, 1);
  for (Mode mode : {Mode::train, Mode::infer}) {
    const ForwardRecord<float> rec = encode(p, x, mode);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (float v : rec.embedding.row(i)) s += double(v) * v;
      EXPECT_NEAR(std::sqrt(s), 1.0, 1e-5);
    }
  }
}

TEST(EncodeTest, DuplicateRowsInferIdentical) {
  const Params p = init_params(tiny_config());
  Rng rng(5);
  Tensor x = random_tensor<float>({3, 1, 8, 8}, rng, 0, 1);
  std::copy(x.row(0).begin(), x.row(0).end(), x.row(2).begin());
  const ForwardRecord<float> rec = encode(p, x);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(rec.embedding.row(0)[j], rec.embedding.row(2)[j]);
}

TEST(EncodeTest, RejectsWrongShape) {
  const Params p = init_params(tiny_config());
  EXPECT_THROW(encode(p, Tensor({1, 1, 16, 16})), DimensionError);
  EXPECT_THROW(encode(p, Tensor({1, 2, 8, 8})), DimensionError);
}

TEST(EncodeTest, TrainModeUpdatesRunningStatsOnly) {
  Params p = init_params(tiny_config());
  const Params before = p;
  Rng rng(6);
  const Tensor x = random_tensor<float>({3, 1, 8, 8}, rng, 0, 1);
  encode(p, x, Mode::infer);
  EXPECT_TRUE(p.norms[0].running_mean == before.norms[0].running_mean);
  encode(p, x, Mode::train);
  EXPECT_FALSE(p.norms[0].running_mean == before.norms[0].running_mean);
  EXPECT_TRUE(p.convs[0].weight == before.convs[0].weight);
}

TEST(DecodeTest, OutputShapeMatchesInput) {
  const Params p = init_params(NetworkConfig{});
  Rng rng(7);
  const Tensor x = random_tensor<float>({2, 1, 64, 64}, rng, 0, 1);
  ForwardRecord<float> rec = encode(p, x);
  const Tensor& r = decode(p, rec);
  EXPECT_EQ(r.shape(), x.shape());
  EXPECT_TRUE(r.all_finite());
}

TEST(DecodeTest, RejectsMismatchedRecord) {
  const Params tiny = init_params(tiny_config());
  NetworkConfig other = tiny_config();
  other.channels = {2, 4, 4};
  other.canvas = 8;
  const Params deeper = init_params(other);
  Rng rng(8);
  ForwardRecord<float> rec = encode(tiny, random_tensor<float>({1, 1, 8, 8}, rng, 0, 1));
  EXPECT_THROW(decode(deeper, rec), InternalError);
  EXPECT_THROW(backward(deeper, rec, &rec.embedding, nullptr), InternalError);
}

TEST(DecodeTest, NonArgmaxPixelDoesNotChangePooledPathway) {
  // Zeroing a pixel that lost every pool window leaves the switches and
  // the first block's pooled output unchanged.
  NetworkConfig c = tiny_config();
  c.channels = {2};
  c.convs_per_block = 1;
  Params p = init_params(c);
  p.convs[0].weight.fill(0.0f);
  p.convs[0].weight.at(0, 0, 1, 1) = 1.0f;  // identity on channel 0
  p.convs[0].weight.at(1, 0, 1, 1) = 1.0f;
  Rng rng(9);
  Tensor x = random_tensor<float>({1, 1, 8, 8}, rng, 0.1, 1);
  const ForwardRecord<float> a = encode(p, x);
  std::size_t loser = 0;
  while (true) {
    bool wins = false;
    for (std::size_t s : a.switches[0].argmax) wins |= (s % 64) == loser;
    if (!wins) break;
    ++loser;
  }
  x[loser] = 0.0f;
  const ForwardRecord<float> b = encode(p, x);
  EXPECT_EQ(a.switches[0].argmax, b.switches[0].argmax);
  EXPECT_TRUE(a.fc_input == b.fc_input);
}

TEST(BackwardTest, ZeroUpstreamZeroGrads) {
  Params p = init_params(tiny_config());
  Rng rng(10);
  ForwardRecord<float> rec = encode(p, random_tensor<float>({3, 1, 8, 8}, rng, 0, 1), Mode::train);
  decode(p, rec);
  const Tensor dz = zeros_like(rec.embedding), dr = zeros_like(rec.reconstruction);
  const Params g = backward(p, rec, &dz, &dr);
  g.for_each_trainable([](const std::string& name, const Tensor& t) {
    for (float v : t.values()) EXPECT_EQ(v, 0.0f) << name;
  });
}

TEST(BackwardTest, EmbeddingOnlyLeavesDecoderBiasesZero) {
  Params p = init_params(tiny_config());
  Rng rng(12);
  const ForwardRecord<float> rec =
      encode(p, random_tensor<float>({3, 1, 8, 8}, rng, 0, 1), Mode::train);
  const Tensor dz = random_tensor<float>({3, 8}, rng, -1, 1);
  const Params g = backward(p, rec, &dz, nullptr);
  for (const Tensor& b : g.decoder_bias) {
    for (float v : b.values()) EXPECT_EQ(v, 0.0f);
  }
  for (float v : g.decoder_fc_bias.values()) EXPECT_EQ(v, 0.0f);
  double norm = 0;
  for (float v : g.convs[0].weight.values()) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);
}

// Joint loss: sum (x_c - decode(encode(x)))^2 + <r, embedding>, so that both
// the encoder path and the decoder path reach every tied weight.
struct JointProblem {
  Params64 params;
  Tensor64 x, target, r;
  Mode mode;
  bool with_embedding_term;

  double loss(std::string* signature = nullptr) const {
    Params64 copy = params;
    ForwardRecord<double> rec = encode(copy, x, mode);
    const Tensor64& out = decode(copy, rec);
    if (signature) *signature = activation_signature(rec);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += (target[i] - out[i]) * (target[i] - out[i]);
    if (with_embedding_term) s += dot(r, rec.embedding);
    return s;
  }

  Params64 analytic() const {
    Params64 copy = params;
    ForwardRecord<double> rec = encode(copy, x, mode);
    const Tensor64& out = decode(copy, rec);
    Tensor64 dr(out.shape());
    for (std::size_t i = 0; i < out.size(); ++i) dr[i] = 2.0 * (out[i] - target[i]);
    return backward(copy, rec, with_embedding_term ? &r : nullptr, &dr);
  }
};

void check_all_params(JointProblem& prob, double tol) {
  const Params64 g = prob.analytic();
  std::string base;
  prob.loss(&base);
  auto stable = [&] {
    std::string sig;
    prob.loss(&sig);
    return sig == base;
  };
  std::vector<std::pair<std::string, const Tensor64*>> analytic;
  g.for_each_trainable([&](const std::string& n, const Tensor64& t) { analytic.emplace_back(n, &t); });
  std::size_t i = 0, total_compared = 0;
  prob.params.for_each_trainable([&](const std::string& name, Tensor64& t) {
    const Tensor64 numeric = numeric_gradient(t, [&] { return prob.loss(); }, kGradCheckStep, stable);
    const GradComparison cmp = compare_gradients(*analytic[i++].second, numeric);
    EXPECT_LT(cmp.max_rel_error, tol) << name;
    EXPECT_LE(cmp.skipped, numeric.size() / 4) << name;
    total_compared += cmp.compared;
  });
  EXPECT_GT(total_compared, 300u);
}

TEST(BackwardTest, ReconstructionGradMatchesFiniteDifferencesTrain) {
  Rng rng(13);
  JointProblem prob{perturbed_tiny(21), random_tensor<double>({3, 1, 8, 8}, rng, 0, 1),
                    random_tensor<double>({3, 1, 8, 8}, rng, 0, 1), Tensor64({3, 8}),
                    Mode::train, false};
  check_all_params(prob, 1e-4);
}

TEST(BackwardTest, TiedJointGradMatchesFiniteDifferences) {
  Rng rng(14);
  JointProblem prob{perturbed_tiny(22), random_tensor<double>({3, 1, 8, 8}, rng, 0, 1),
                    random_tensor<double>({3, 1, 8, 8}, rng, 0, 1),
                    random_tensor<double>({3, 8}, rng, -1, 1), Mode::train, true};
  check_all_params(prob, 1e-4);
}

TEST(BackwardTest, InferModeUnnormalizedGradMatchesFiniteDifferences) {
  Rng rng(15);
  JointProblem prob{perturbed_tiny(23, false), random_tensor<double>({2, 1, 8, 8}, rng, 0, 1),
                    random_tensor<double>({2, 1, 8, 8}, rng, 0, 1),
                    random_tensor<double>({2, 8}, rng, -1, 1), Mode::infer, true};
  check_all_params(prob, 1e-4);
}

TEST(TyingTest, MutatingConvWeightChangesBothPaths) {
  Params p = init_params(tiny_config());
  Rng rng(16);
  const Tensor x = random_tensor<float>({1, 1, 8, 8}, rng, 0, 1);
  ForwardRecord<float> a = encode(p, x);
  const Tensor ra = decode(p, a);
  // Decoding the same embedding with a modified weight changes the
  // reconstruction, and encoding changes the embedding.
  p.convs[1].weight[0] += 0.5f;
  ForwardRecord<float> b = a;
  EXPECT_FALSE(decode(p, b) == ra);
  EXPECT_FALSE(encode(p, x).embedding == a.embedding);
}

TEST(CheckpointTest, RoundTripIsExact) {
  Params p = init_params(tiny_config());
  attach_exemplar_head(p, 5, 3);
  Rng rng(17);
  encode(p, random_tensor<float>({3, 1, 8, 8}, rng, 0, 1), Mode::train);
  Checkpoint ck;
  ck.config["mode"] = "OJ";
  pack_params(p, ck);
  const auto path = std::filesystem::temp_directory_path() / "orbit_ckpt_test.ockp";
  write_checkpoint(path, ck);
  const Checkpoint back = read_checkpoint(path);
  EXPECT_EQ(back.config.at("mode"), "OJ");
  const Params q = unpack_params(back);
  EXPECT_TRUE(q.has_head());
  EXPECT_TRUE(q.norms[1].running_var == p.norms[1].running_var);
  EXPECT_TRUE(q.fc_weight == p.fc_weight);
  EXPECT_TRUE(q.head_weight == p.head_weight);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  const auto path = std::filesystem::temp_directory_path() / "orbit_ckpt_bad.ockp";
  {
    std::ofstream os(path, std::ios::binary);
    os << "XXXXjunk";
  }
  EXPECT_THROW(read_checkpoint(path), BadMagicError);
  Checkpoint ck;
  pack_params(init_params(tiny_config()), ck);
  write_checkpoint(path, ck);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(read_checkpoint(path), TruncatedError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace orbit
