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

#include "orbit/network.hpp"

#include <cmath>
#include <sstream>

#include "orbit/error.hpp"

namespace orbit {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kHeadStream = 0x4ead;

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("network config: bad value for " + key + ": '" + text + "'");
  }
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
  return out;
}

template <typename T>
BasicTensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / double(fan_in));
  return generate_tensor<T>(std::move(shape), [&] { return sd * rng.normal(); });
}

template <typename T>
void add_into(BasicTensor<T>& acc, const BasicTensor<T>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

template <typename T>
void check_record(const ModelParams<T>& params, const ForwardRecord<T>& record) {
  const NetworkConfig& c = params.config;
  if (record.convs.size() != c.conv_count() || record.switches.size() != c.blocks() ||
      record.embedding.empty() || record.fc_input.empty()) {
    throw InternalError("forward record does not match the network");
  }
}

}  // namespace

// -------------------------------------------------------------- config

std::size_t NetworkConfig::final_extent() const {
  std::size_t e = canvas;
  for (std::size_t b = 0; b < blocks(); ++b) e /= pool_stride;
  return e;
}

std::size_t NetworkConfig::flat_dim() const {
  return channels.back() * final_extent() * final_extent();
}

void NetworkConfig::validate() const {
  if (channels.empty()) throw ConfigError("channel schedule is empty");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("channel schedule contains 0");
  }
  if (convs_per_block == 0) throw ConfigError("convs_per_block must be positive");
  if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (pool_stride == 0 || pool_size < pool_stride || (pool_size - pool_stride) % 2 != 0) {
    throw ConfigError("unsupported pool size/stride " + std::to_string(pool_size) + "/" +
                      std::to_string(pool_stride));
  }
  std::size_t e = canvas;
  for (std::size_t b = 0; b < blocks(); ++b) {
    if (e == 0 || e % pool_stride != 0) {
      throw ConfigError("canvas " + std::to_string(canvas) + " not divisible by " +
                        std::to_string(pool_stride) + "^" + std::to_string(blocks()));
    }
    e /= pool_stride;
  }
  if (e == 0) throw ConfigError("canvas too small for the pool schedule");
}

std::map<std::string, std::string> NetworkConfig::to_key_values() const {
  return {
      {"net.canvas", std::to_string(canvas)},
      {"net.channels", join_sizes(channels)},
      {"net.convs_per_block", std::to_string(convs_per_block)},
      {"net.pool_size", std::to_string(pool_size)},
      {"net.pool_stride", std::to_string(pool_stride)},
      {"net.embedding_dim", std::to_string(embedding_dim)},
      {"net.normalize_embedding", normalize_embedding ? "1" : "0"},
      {"net.fc_activation", "linear"},
      {"net.seed", std::to_string(seed)},
  };
}

NetworkConfig NetworkConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("network config: missing " + key);
    return it->second;
  };
  NetworkConfig c;
  c.canvas = parse_size("net.canvas", get("net.canvas"));
  c.channels = parse_sizes("net.channels", get("net.channels"));
  c.convs_per_block = parse_size("net.convs_per_block", get("net.convs_per_block"));
  c.pool_size = parse_size("net.pool_size", get("net.pool_size"));
  c.pool_stride = parse_size("net.pool_stride", get("net.pool_stride"));
  c.embedding_dim = parse_size("net.embedding_dim", get("net.embedding_dim"));
  c.normalize_embedding = get("net.normalize_embedding") == "1";
  c.seed = parse_size("net.seed", get("net.seed"));
  c.validate();
  return c;
}

// -------------------------------------------------------------- params

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams out = *this;
  out.for_each_trainable([](const std::string&, BasicTensor<T>& t) { t.fill(T{0}); });
  out.for_each_state([](const std::string&, BasicTensor<T>& t) { t.fill(T{0}); });
  return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config = config;
  for (const auto& c : convs) out.convs.push_back({c.weight.template cast<U>(), c.bias.template cast<U>()});
  for (const auto& n : norms) {
    out.norms.push_back({n.gamma.template cast<U>(), n.beta.template cast<U>(),
                         n.running_mean.template cast<U>(), n.running_var.template cast<U>()});
  }
  out.fc_weight = fc_weight.template cast<U>();
  out.fc_bias = fc_bias.template cast<U>();
  for (const auto& b : decoder_bias) out.decoder_bias.push_back(b.template cast<U>());
  out.decoder_fc_bias = decoder_fc_bias.template cast<U>();
  if (has_head()) {
    out.head_weight = head_weight.template cast<U>();
    out.head_bias = head_bias.template cast<U>();
  }
  return out;
}

Params init_params(const NetworkConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, kInitStream, 0));
  Params p;
  p.config = config;
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    const std::size_t out_ch = config.channels[b];
    for (std::size_t j = 0; j < config.convs_per_block; ++j) {
      const std::size_t fan_in = in_ch * kKernel * kKernel;
      p.convs.push_back({he_normal<float>({out_ch, in_ch, kKernel, kKernel}, fan_in, rng),
                         Tensor({out_ch})});
      p.norms.push_back({Tensor({out_ch}, 1.0f), Tensor({out_ch}), Tensor({out_ch}),
                         Tensor({out_ch}, 1.0f)});
      p.decoder_bias.push_back(Tensor({in_ch}));
      in_ch = out_ch;
    }
  }
  const std::size_t d = config.flat_dim();
  p.fc_weight = he_normal<float>({config.embedding_dim, d}, d, rng);
  p.fc_bias = Tensor({config.embedding_dim});
  p.decoder_fc_bias = Tensor({d});
  return p;
}

template <typename T>
void attach_exemplar_head(ModelParams<T>& params, std::size_t n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw ConfigError("exemplar head needs at least 2 classes");
  Rng rng(derive_seed(seed, kHeadStream, n_classes));
  const std::size_t k = params.config.embedding_dim;
  params.head_weight = he_normal<T>({n_classes, k}, k, rng);
  params.head_bias = BasicTensor<T>({n_classes});
}

// ------------------------------------------------------------- forward

namespace {

template <typename T>
ForwardRecord<T> encode_impl(const ModelParams<T>& params, const BasicTensor<T>& batch,
                             Mode mode, std::vector<NormParams<T>>* updated) {
  const NetworkConfig& c = params.config;
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != c.canvas || s[3] != c.canvas) {
    throw DimensionError("encode: expected [N,1," + std::to_string(c.canvas) + "," +
                         std::to_string(c.canvas) + "], got " + shape_string(s));
  }
  if (params.convs.size() != c.conv_count() || params.norms.size() != c.conv_count()) {
    throw InternalError("encode: parameters do not match the network config");
  }
  ForwardRecord<T> rec;
  rec.mode = mode;
  rec.input_shape = s;
  rec.convs.resize(c.conv_count());
  BasicTensor<T> x = batch;
  for (std::size_t b = 0; b < c.blocks(); ++b) {
    for (std::size_t j = 0; j < c.convs_per_block; ++j) {
      const std::size_t l = b * c.convs_per_block + j;
      ConvStep<T>& step = rec.convs[l];
      step.input = std::move(x);
      BasicTensor<T> y = conv2d(step.input, params.convs[l].weight, params.convs[l].bias, 1, kPad);
      NormParams<T> stats = params.norms[l];
      step.pre_activation = batch_norm(y, stats.gamma, stats.beta, mode, stats.running_mean,
                                       stats.running_var, &step.norm);
      if (updated) (*updated)[l] = std::move(stats);
      x = relu(step.pre_activation);
    }
    PoolResult<T> pooled = max_pool(x, c.pool_size, c.pool_stride);
    rec.switches.push_back(std::move(pooled.switches));
    x = std::move(pooled.output);
  }
  const std::size_t n = s[0];
  x.reshape({n, c.flat_dim()});
  rec.fc_input = std::move(x);
  rec.embedding_raw = linear(rec.fc_input, params.fc_weight, params.fc_bias);
  rec.embedding = c.normalize_embedding ? l2_normalize_rows(rec.embedding_raw) : rec.embedding_raw;
  return rec;
}

}  // namespace

template <typename T>
ForwardRecord<T> encode(ModelParams<T>& params, const BasicTensor<T>& batch, Mode mode) {
  if (mode == Mode::infer) return encode_impl<T>(params, batch, mode, nullptr);
  std::vector<NormParams<T>> updated(params.norms.size());
  ForwardRecord<T> rec = encode_impl(params, batch, mode, &updated);
  for (std::size_t l = 0; l < updated.size(); ++l) {
    params.norms[l].running_mean = std::move(updated[l].running_mean);
    params.norms[l].running_var = std::move(updated[l].running_var);
  }
  return rec;
}

template <typename T>
ForwardRecord<T> encode(const ModelParams<T>& params, const BasicTensor<T>& batch) {
  return encode_impl<T>(params, batch, Mode::infer, nullptr);
}

template <typename T>
const BasicTensor<T>& decode(const ModelParams<T>& params, ForwardRecord<T>& record) {
  check_record(params, record);
  const NetworkConfig& c = params.config;
  const std::size_t n = record.input_shape[0];
  BasicTensor<T> x = linear_transpose(record.embedding, params.fc_weight, params.decoder_fc_bias);
  const std::size_t e = c.final_extent();
  x.reshape({n, c.channels.back(), e, e});
  record.decoder.clear();
  for (std::size_t b = c.blocks(); b-- > 0;) {
    x = max_unpool(x, record.switches[b]);
    for (std::size_t j = c.convs_per_block; j-- > 0;) {
      const std::size_t l = b * c.convs_per_block + j;
      DecoderStep<T> step;
      step.input = std::move(x);
      const Shape& target = record.convs[l].input.shape();
      step.output = conv2d_transpose(step.input, params.convs[l].weight, params.decoder_bias[l],
                                     1, kPad, target[2], target[3]);
      x = l == 0 ? step.output : relu(step.output);
      record.decoder.push_back(std::move(step));
    }
  }
  record.reconstruction = std::move(x);
  return record.reconstruction;
}

// ------------------------------------------------------------ backward

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardRecord<T>& record,
                        std::type_identity_t<const BasicTensor<T>*> d_embedding,
                        std::type_identity_t<const BasicTensor<T>*> d_reconstruction) {
  check_record(params, record);
  const NetworkConfig& c = params.config;
  const std::size_t n = record.input_shape[0];
  ModelParams<T> grads = params.zeros_like();

  BasicTensor<T> dz;
  if (d_embedding) {
    if (d_embedding->shape() != record.embedding.shape()) {
      throw DimensionError("backward: embedding gradient shape " +
                           shape_string(d_embedding->shape()));
    }
    dz = *d_embedding;
  } else {
    dz = zeros_like(record.embedding);
  }

  if (d_reconstruction) {
    if (!record.decoded() || record.decoder.size() != c.conv_count()) {
      throw InternalError("backward: reconstruction gradient without a decoded record");
    }
    if (d_reconstruction->shape() != record.reconstruction.shape()) {
      throw DimensionError("backward: reconstruction gradient shape " +
                           shape_string(d_reconstruction->shape()));
    }
    BasicTensor<T> g = *d_reconstruction;
    // Decoder steps were recorded from the deepest conv down to conv 0.
    std::size_t step_index = record.decoder.size();
    for (std::size_t b = 0; b < c.blocks(); ++b) {
      for (std::size_t j = 0; j < c.convs_per_block; ++j) {
        const std::size_t l = b * c.convs_per_block + j;
        const DecoderStep<T>& step = record.decoder[--step_index];
        if (l != 0) g = relu_backward(step.output, g);
        ConvGrads<T> cg = conv2d_transpose_backward(step.input, params.convs[l].weight, g, 1, kPad);
        add_into(grads.convs[l].weight, cg.weight);
        add_into(grads.decoder_bias[l], cg.bias);
        g = std::move(cg.input);
      }
      g = max_unpool_backward(g, record.switches[b]);
    }
    g.reshape({n, c.flat_dim()});
    LinearGrads<T> lg = linear_transpose_backward(record.embedding, params.fc_weight, g);
    add_into(grads.fc_weight, lg.weight);
    add_into(grads.decoder_fc_bias, lg.bias);
    add_into(dz, lg.input);
  }

  BasicTensor<T> draw = c.normalize_embedding
                            ? l2_normalize_rows_backward(record.embedding_raw, record.embedding, dz)
                            : dz;
  LinearGrads<T> fg = linear_backward(record.fc_input, params.fc_weight, draw);
  add_into(grads.fc_weight, fg.weight);
  add_into(grads.fc_bias, fg.bias);

  BasicTensor<T> g = std::move(fg.input);
  const std::size_t e = c.final_extent();
  g.reshape({n, c.channels.back(), e, e});
  for (std::size_t b = c.blocks(); b-- > 0;) {
    g = max_pool_backward(g, record.switches[b]);
    for (std::size_t j = c.convs_per_block; j-- > 0;) {
      const std::size_t l = b * c.convs_per_block + j;
      const ConvStep<T>& step = record.convs[l];
      g = relu_backward(step.pre_activation, g);
      BatchNormGrads<T> bg = batch_norm_backward(g, params.norms[l].gamma, step.norm);
      add_into(grads.norms[l].gamma, bg.gamma);
      add_into(grads.norms[l].beta, bg.beta);
      ConvGrads<T> cg = conv2d_backward(step.input, params.convs[l].weight, bg.input, 1, kPad,
                                        l != 0);
      add_into(grads.convs[l].weight, cg.weight);
      add_into(grads.convs[l].bias, cg.bias);
      g = std::move(cg.input);
    }
  }
  return grads;
}

template <typename T>
std::string activation_signature(const ForwardRecord<T>& record) {
  std::string sig;
  for (const auto& step : record.convs) {
    for (T v : step.pre_activation.values()) sig.push_back(v > T{0} ? '1' : '0');
  }
  for (const auto& sw : record.switches) {
    for (std::size_t a : sw.argmax) sig.append(std::to_string(a)).push_back(',');
  }
  // The last decoder step has no ReLU.
  for (std::size_t i = 0; i + 1 < record.decoder.size(); ++i) {
    for (T v : record.decoder[i].output.values()) sig.push_back(v > T{0} ? '1' : '0');
  }
  return sig;
}

#define ORBIT_INSTANTIATE(T)                                                               \
  template struct ModelParams<T>;                                                          \
  template void attach_exemplar_head(ModelParams<T>&, std::size_t, std::uint64_t);         \
  template ForwardRecord<T> encode(ModelParams<T>&, const BasicTensor<T>&, Mode);          \
  template ForwardRecord<T> encode(const ModelParams<T>&, const BasicTensor<T>&);          \
  template const BasicTensor<T>& decode(const ModelParams<T>&, ForwardRecord<T>&);         \
  template ModelParams<T> backward(const ModelParams<T>&, const ForwardRecord<T>&,         \
                                   const BasicTensor<T>*, const BasicTensor<T>*);          \
  template std::string activation_signature(const ForwardRecord<T>&);

ORBIT_INSTANTIATE(float)
ORBIT_INSTANTIATE(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace orbit
