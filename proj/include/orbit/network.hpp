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

// VGG-style convolutional encoder and the tied-weight deconvolutional
// decoder that mirrors it.
//
// Encoder, per block b (channels[b]):
//   convs_per_block x { conv3x3 -> batch norm -> ReLU }, then max pool
// followed by flatten -> linear (k units) -> optional row L2 normalization.
//
// Decoder, from the embedding:
//   linear with fc_weight^T + free bias -> reshape -> for each block in
//   reverse: unpool with the encoder switches -> transposed convs (reusing
//   each encoder conv weight) with ReLU between, the very last one linear.

#include <cstdint>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "orbit/layers.hpp"
#include "orbit/random.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

struct NetworkConfig {
  std::size_t canvas = 64;
  std::vector<std::size_t> channels{16, 32, 64, 128};
  std::size_t convs_per_block = 2;
  std::size_t pool_size = 2;
  std::size_t pool_stride = 2;
  std::size_t embedding_dim = 1024;
  bool normalize_embedding = true;
  std::uint64_t seed = 0;

  std::size_t blocks() const { return channels.size(); }
  std::size_t conv_count() const { return blocks() * convs_per_block; }
  /// Spatial extent after the last pool.
  std::size_t final_extent() const;
  /// Length of the flattened feature map feeding the linear layer.
  std::size_t flat_dim() const;
  std::size_t input_dim() const { return canvas * canvas; }

  /// Throws ConfigError on an unusable configuration.
  void validate() const;

  std::map<std::string, std::string> to_key_values() const;
  static NetworkConfig from_key_values(const std::map<std::string, std::string>& kv);
};

template <typename T>
struct ConvParams {
  BasicTensor<T> weight;  // [out, in, 3, 3], shared with the decoder
  BasicTensor<T> bias;    // [out]
};

template <typename T>
struct NormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

template <typename T>
struct ModelParams {
  NetworkConfig config;
  std::vector<ConvParams<T>> convs;
  std::vector<NormParams<T>> norms;
  BasicTensor<T> fc_weight;  // [k, flat_dim], shared with the decoder
  BasicTensor<T> fc_bias;
  std::vector<BasicTensor<T>> decoder_bias;  // per conv, length = conv input channels
  BasicTensor<T> decoder_fc_bias;            // [flat_dim]
  BasicTensor<T> head_weight;                // exemplar classifier, empty unless attached
  BasicTensor<T> head_bias;

  bool has_head() const { return !head_weight.empty(); }

  /// Visits (name, tensor) for every trainable leaf in a fixed order.
  template <typename F>
  void for_each_trainable(F&& f) {
    visit_trainable(*this, f);
  }
  template <typename F>
  void for_each_trainable(F&& f) const {
    visit_trainable(*this, f);
  }

  /// Visits the batch-norm running statistics.
  template <typename F>
  void for_each_state(F&& f) {
    visit_state(*this, f);
  }
  template <typename F>
  void for_each_state(F&& f) const {
    visit_state(*this, f);
  }

  /// Same structure with every tensor zeroed.
  ModelParams zeros_like() const;

  template <typename U>
  ModelParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit_trainable(Self& p, F& f) {
    for (std::size_t i = 0; i < p.convs.size(); ++i) {
      f("conv" + std::to_string(i) + ".weight", p.convs[i].weight);
      f("conv" + std::to_string(i) + ".bias", p.convs[i].bias);
      f("bn" + std::to_string(i) + ".gamma", p.norms[i].gamma);
      f("bn" + std::to_string(i) + ".beta", p.norms[i].beta);
    }
    f(std::string("fc.weight"), p.fc_weight);
    f(std::string("fc.bias"), p.fc_bias);
    for (std::size_t i = 0; i < p.decoder_bias.size(); ++i) {
      f("dec" + std::to_string(i) + ".bias", p.decoder_bias[i]);
    }
    f(std::string("dec_fc.bias"), p.decoder_fc_bias);
    if (p.has_head()) {
      f(std::string("head.weight"), p.head_weight);
      f(std::string("head.bias"), p.head_bias);
    }
  }
  template <typename Self, typename F>
  static void visit_state(Self& p, F& f) {
    for (std::size_t i = 0; i < p.norms.size(); ++i) {
      f("bn" + std::to_string(i) + ".running_mean", p.norms[i].running_mean);
      f("bn" + std::to_string(i) + ".running_var", p.norms[i].running_var);
    }
  }
};

using Params = ModelParams<float>;
using Params64 = ModelParams<double>;

/// He-normal weights (variance 2 / fan_in), zero biases, gamma 1, beta 0,
/// running mean 0 / variance 1. Deterministic in config.seed.
Params init_params(const NetworkConfig& config);

/// Adds a k -> n_classes linear head, initialized like the other layers.
template <typename T>
void attach_exemplar_head(ModelParams<T>& params, std::size_t n_classes, std::uint64_t seed);

template <typename T>
struct ConvStep {
  BasicTensor<T> input;
  BasicTensor<T> pre_activation;  // batch-norm output, before ReLU
  BatchNormCache<T> norm;
};

template <typename T>
struct DecoderStep {
  BasicTensor<T> input;
  BasicTensor<T> output;  // before ReLU (the final step has none)
};

/// Everything backward() and decode() need from a forward pass.
template <typename T>
struct ForwardRecord {
  Mode mode = Mode::infer;
  Shape input_shape;
  std::vector<ConvStep<T>> convs;
  std::vector<PoolSwitches> switches;  // one per block
  BasicTensor<T> fc_input;             // [N, flat_dim]
  BasicTensor<T> embedding_raw;        // [N, k] before normalization
  BasicTensor<T> embedding;            // [N, k]
  std::vector<DecoderStep<T>> decoder;  // in decoder execution order
  BasicTensor<T> reconstruction;        // [N,1,S,S] once decoded

  bool decoded() const { return !reconstruction.empty(); }
};

/// Train mode uses batch statistics and updates the running statistics in
/// `params`.
template <typename T>
ForwardRecord<T> encode(ModelParams<T>& params, const BasicTensor<T>& batch, Mode mode);

/// Infer-mode encoding; params are not modified.
template <typename T>
ForwardRecord<T> encode(const ModelParams<T>& params, const BasicTensor<T>& batch);

/// Runs the decoder on record.embedding and stores its activations in the
/// record. Returns the reconstruction.
template <typename T>
const BasicTensor<T>& decode(const ModelParams<T>& params, ForwardRecord<T>& record);

/// Gradients of every trainable leaf given upstream gradients on the
/// embedding and/or the reconstruction (either may be null). Tied weights
/// receive the sum of their encoder and decoder contributions.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardRecord<T>& record,
                        std::type_identity_t<const BasicTensor<T>*> d_embedding,
                        std::type_identity_t<const BasicTensor<T>*> d_reconstruction);

/// One byte per ReLU unit and pool window describing which branch each
/// non-smooth unit took. Equal signatures mean the network is locally
/// smooth between two evaluations.
template <typename T>
std::string activation_signature(const ForwardRecord<T>& record);

}  // namespace orbit
