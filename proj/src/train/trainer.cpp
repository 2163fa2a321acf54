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

#include "orbit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "orbit/error.hpp"
#include "orbit/eval.hpp"
#include "orbit/files.hpp"
#include "orbit/log.hpp"

namespace orbit {

namespace {

constexpr std::uint64_t kPlanSeedStream = 0x91a2;
constexpr std::uint64_t kMiningStream = 0x3e1e;
constexpr std::uint64_t kValidationStream = 0x7a11;

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint config lacks '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint config: bad number for '" + key + "'");
  }
}

std::uint64_t mining_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch) {
  return derive_seed(seed, kMiningStream, (epoch << 32) | batch);
}

LossConfig loss_for(const TrainConfig& config) {
  LossConfig cfg = config.loss;
  cfg.input_dim = config.net.canvas * config.net.canvas;
  cfg.embedding_dim = config.net.embedding_dim;
  return effective_loss_config(config.mode, cfg);
}

BatchPlan plan_for(const TrainConfig& config) {
  BatchPlan plan = config.plan;
  plan.seed = derive_seed(config.seed, kPlanSeedStream);
  return plan;
}

}  // namespace

MiniBatch<float> assemble_batch(LossMode mode, const OrbitDataset& dataset,
                                const std::vector<std::size_t>& indices) {
  MiniBatch<float> batch;
  batch.inputs = dataset.gather(indices);
  if (mode == LossMode::OE || mode == LossMode::OJ) {
    std::vector<std::size_t> canon;
    canon.reserve(indices.size());
    for (std::size_t i : indices) {
      const OrbitSet& o = dataset.orbit_of(i);
      if (o.members.empty() ||
          std::find(o.members.begin(), o.members.end(), o.canonical) == o.members.end()) {
        throw InternalError("orbit " + std::to_string(o.id) + " has no canonical member");
      }
      canon.push_back(o.canonical);
    }
    batch.targets = dataset.gather(canon);
  } else if (mode == LossMode::AE) {
    batch.targets = batch.inputs;
  }
  if (mode == LossMode::OT || mode == LossMode::OJ) {
    for (std::size_t i : indices) batch.ids.push_back(dataset.orbit_of(i).id);
  } else if (mode == LossMode::ST) {
    for (std::size_t i : indices) {
      const std::int64_t label = dataset.label_of(i);
      if (label == kUnlabeled) throw LabelError("ST mode needs class labels; image " +
                                                std::to_string(i) + " has none");
      batch.ids.push_back(label);
    }
  } else if (mode == LossMode::EX) {
    for (std::size_t i : indices) batch.labels.push_back(dataset.orbit_position(i));
  }
  return batch;
}

LossConfig effective_loss_config(LossMode mode, const LossConfig& cfg) {
  LossConfig out = cfg;
  if (mode == LossMode::OT || mode == LossMode::ST) out.lambda2 = 0.0;
  if (mode == LossMode::OE || mode == LossMode::AE) out.lambda1 = 0.0;
  return out;
}

template <typename T>
StepOutput<T> loss_and_gradients(ModelParams<T>& params, const MiniBatch<T>& batch, LossMode mode,
                                 const LossConfig& loss, Rng* mining_rng,
                                 const std::vector<Triplet>* fixed_triplets,
                                 bool compute_gradients) {
  ForwardRecord<T> rec = encode(params, batch.inputs, Mode::train);
  StepOutput<T> out;
  if (mode == LossMode::EX) {
    if (!params.has_head()) throw InternalError("EX mode without a classifier head");
    ExemplarLossResult<T> ex =
        exemplar_loss(rec.embedding, params.head_weight, params.head_bias, batch.labels);
    out.loss = ex.loss;
    if (compute_gradients) {
      out.grads = backward(params, rec, &ex.d_embedding, nullptr);
      out.grads.head_weight = std::move(ex.d_head_weight);
      out.grads.head_bias = std::move(ex.d_head_bias);
    }
    return out;
  }
  const LossConfig cfg = effective_loss_config(mode, loss);
  if (cfg.lambda2 > 0) {
    if (batch.targets.empty()) throw InternalError("reconstruction mode without targets");
    decode(params, rec);
  }
  if (cfg.lambda1 > 0) {
    if (fixed_triplets) {
      out.triplets = *fixed_triplets;
    } else {
      if (!mining_rng) throw InternalError("triplet mode without a mining generator");
      out.triplets = mine_triplets(rec.embedding, batch.ids, cfg.alpha, *mining_rng);
    }
  }
  JointLossResult<T> jl =
      orbit_joint_loss(rec.embedding, rec.reconstruction, batch.targets, out.triplets, cfg);
  out.loss = jl.loss;
  out.triplet_term = jl.triplet;
  out.reconstruction_term = jl.reconstruction;
  if (compute_gradients) {
    out.grads = backward(params, rec, &jl.d_embedding,
                         jl.d_reconstruction.empty() ? nullptr : &jl.d_reconstruction);
  }
  return out;
}

template StepOutput<float> loss_and_gradients(ModelParams<float>&, const MiniBatch<float>&,
                                              LossMode, const LossConfig&, Rng*,
                                              const std::vector<Triplet>*, bool);
template StepOutput<double> loss_and_gradients(ModelParams<double>&, const MiniBatch<double>&,
                                               LossMode, const LossConfig&, Rng*,
                                               const std::vector<Triplet>*, bool);

// ---------------------------------------------------------------- config

void TrainConfig::validate(const OrbitDataset& dataset) const {
  net.validate();
  adam.validate();
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (checkpoint_every == 0) throw ConfigError("checkpoint cadence must be positive");
  if (dataset.image_count() == 0) throw ConfigError("training set is empty");
  if (dataset.canvas() != net.canvas) {
    throw DimensionError("dataset canvas " + std::to_string(dataset.canvas()) +
                         " does not match network canvas " + std::to_string(net.canvas));
  }
  if (mode != LossMode::EX) {
    const LossConfig cfg = loss_for(*this);
    cfg.validate();
    if (cfg.lambda1 == 0 && cfg.lambda2 == 0) {
      throw ConfigError(to_string(mode) + ": the effective objective has no terms");
    }
  }
  if (uses_triplets(mode) && plan.samples_per_orbit < 2) {
    throw ConfigError(to_string(mode) + " needs at least 2 samples per orbit to mine positives");
  }
  if (mode == LossMode::ST && !dataset.has_labels()) {
    throw LabelError("ST mode needs class labels on every orbit");
  }
  if (mode == LossMode::EX && dataset.orbit_count() < 2) {
    throw ConfigError("EX mode needs at least 2 orbits");
  }
  plan_batches(dataset, plan_for(*this), 1);
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv = net.to_key_values();
  kv["net.seed"] = std::to_string(seed);
  kv["train.mode"] = to_string(mode);
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.seed"] = std::to_string(seed);
  kv["train.checkpoint_every"] = std::to_string(checkpoint_every);
  kv["loss.alpha"] = exact(loss.alpha);
  kv["loss.lambda1"] = exact(loss.lambda1);
  kv["loss.lambda2"] = exact(loss.lambda2);
  kv["loss.input_dim"] = std::to_string(net.canvas * net.canvas);
  kv["loss.embedding_dim"] = std::to_string(net.embedding_dim);
  kv["loss.scale_swap"] = loss.scale_swap ? "1" : "0";
  kv["loss.reduction"] = "mean";
  kv["loss.semi_hard_fallback"] = "hardest";
  kv["plan.orbits_per_batch"] = std::to_string(plan.orbits_per_batch);
  kv["plan.samples_per_orbit"] = std::to_string(plan.samples_per_orbit);
  kv["adam.lr"] = exact(adam.lr);
  kv["adam.beta1"] = exact(adam.beta1);
  kv["adam.beta2"] = exact(adam.beta2);
  kv["adam.epsilon"] = exact(adam.epsilon);
  return kv;
}

// ------------------------------------------------------------ checkpoint

std::string epoch_checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu.ockp", epoch);
  return buf;
}

Checkpoint make_checkpoint(const TrainConfig& config, const Params& params, const AdamState& adam,
                           std::size_t epoch) {
  Checkpoint ck;
  ck.config = config.to_key_values();
  pack_params(params, ck);
  ck.config["train.epoch"] = std::to_string(epoch);
  ck.config["adam.t"] = std::to_string(adam.t);
  const std::vector<std::string> names = trainable_names(params);
  for (std::size_t i = 0; i < names.size(); ++i) {
    ck.tensors.emplace_back("adam.m." + names[i], adam.m[i]);
    ck.tensors.emplace_back("adam.v." + names[i], adam.v[i]);
  }
  return ck;
}

ResumePoint resume_from(const Checkpoint& ckpt) {
  ResumePoint r;
  r.params = unpack_params(ckpt);
  r.epoch = std::size_t(parse_double(ckpt.config, "train.epoch"));
  AdamConfig hyper;
  hyper.lr = parse_double(ckpt.config, "adam.lr");
  hyper.beta1 = parse_double(ckpt.config, "adam.beta1");
  hyper.beta2 = parse_double(ckpt.config, "adam.beta2");
  hyper.epsilon = parse_double(ckpt.config, "adam.epsilon");
  r.adam = make_adam_state(r.params, hyper);
  r.adam.t = std::stoull(ckpt.config.at("adam.t"));
  const std::vector<std::string> names = trainable_names(r.params);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor& m = ckpt.get("adam.m." + names[i]);
    const Tensor& v = ckpt.get("adam.v." + names[i]);
    if (m.shape() != r.adam.m[i].shape() || v.shape() != r.adam.v[i].shape()) {
      throw CountMismatchError("checkpoint moment shape mismatch for " + names[i]);
    }
    r.adam.m[i] = m;
    r.adam.v[i] = v;
  }
  return r;
}

const ScoredCheckpoint& early_stop_select(const std::vector<ScoredCheckpoint>& checkpoints) {
  const ScoredCheckpoint* best = nullptr;
  for (const ScoredCheckpoint& c : checkpoints) {
    if (!c.score) continue;
    if (!best || *c.score > *best->score || (*c.score == *best->score && c.epoch < best->epoch)) {
      best = &c;
    }
  }
  if (!best) throw ConfigError("early stopping: no checkpoint has a validation score");
  return *best;
}

// ----------------------------------------------------------------- train

TrainResult train(const TrainConfig& config_in, const OrbitDataset& dataset,
                  const OrbitDataset* validation, const std::optional<ResumePoint>& resume) {
  TrainConfig config = config_in;
  config.net.seed = config.seed;
  config.validate(dataset);
  if (config.mode == LossMode::OT && config.loss.lambda2 > 0) {
    log::warn("OT mode ignores lambda2 = " + exact(config.loss.lambda2));
  }
  const LossConfig loss = loss_for(config);
  const BatchPlan plan = plan_for(config);
  const bool write = !config.out_dir.empty();

  TrainResult result;
  if (resume) {
    const NetworkConfig& rc = resume->params.config;
    if (rc.canvas != config.net.canvas || rc.channels != config.net.channels ||
        rc.embedding_dim != config.net.embedding_dim) {
      throw ConfigError("resume checkpoint network does not match the configuration");
    }
    if (resume->epoch > config.epochs) throw ConfigError("resume epoch beyond the epoch budget");
    result.params = resume->params;
    result.adam = resume->adam;
    result.epoch = resume->epoch;
  } else {
    result.params = init_params(config.net);
    if (config.mode == LossMode::EX) {
      attach_exemplar_head(result.params, dataset.orbit_count(), config.seed);
    }
    result.adam = make_adam_state(result.params, config.adam);
  }
  Params& params = result.params;

  std::ofstream csv;
  if (write) {
    std::filesystem::create_directories(config.out_dir);
    const auto path = config.out_dir / "train_log.csv";
    const bool append = resume && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot open " + path.string());
    if (!append) csv << "epoch,mode,loss,wall_seconds\n";
    if (!resume) std::filesystem::remove(config.out_dir / "validation.csv");
  }
  auto record = [&](const EpochRecord& r) {
    result.log.epochs.push_back(r);
    log::info(to_string(config.mode) + " epoch " + std::to_string(r.epoch) + " loss " +
              exact(r.loss) + " (" + std::to_string(r.wall_seconds) + " s)");
    if (write) {
      csv << r.epoch << ',' << to_string(config.mode) << ',' << exact(r.loss) << ','
          << r.wall_seconds << '\n';
      csv.flush();
    }
  };
  using clock = std::chrono::steady_clock;

  if (config.log_initial_loss && result.epoch == 0) {
    const auto t0 = clock::now();
    Params probe = params;
    const auto batches = plan_batches(dataset, plan, 1);
    double sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Rng rng(mining_seed(config.seed, 0, b));
      sum += loss_and_gradients(probe, assemble_batch(config.mode, dataset, batches[b]),
                                config.mode, loss, &rng, nullptr, false)
                 .loss;
    }
    record({0, sum / double(batches.size()),
            std::chrono::duration<double>(clock::now() - t0).count(), std::nullopt});
  }

  std::vector<std::size_t> validation_rows;
  if (validation) {
    if (!validation->has_labels()) throw LabelError("validation set needs class labels");
    validation_rows = validation->transformed_indices();
  }
  std::optional<double> best_score;

  for (std::size_t epoch = result.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = clock::now();
    const auto batches = plan_batches(dataset, plan, epoch);
    double sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Rng rng(mining_seed(config.seed, epoch, b));
      StepOutput<float> step = loss_and_gradients(
          params, assemble_batch(config.mode, dataset, batches[b]), config.mode, loss, &rng);
      if (!std::isfinite(step.loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(b) +
                              (write ? "; last good checkpoint kept in " + config.out_dir.string()
                                     : std::string()));
      }
      adam_step(params, step.grads, result.adam);
      sum += step.loss;
    }
    result.epoch = epoch;
    EpochRecord rec{epoch, sum / double(batches.size()), 0.0, std::nullopt};
    const bool due = epoch % config.checkpoint_every == 0 || epoch == config.epochs;
    if (due && validation) {
      const EmbeddingTable table = embed_dataset(params, *validation, validation_rows);
      rec.validation = one_shot_accuracy(table, config.validation_resamples,
                                         derive_seed(config.seed, kValidationStream)).mean;
    }
    if (write && due) {
      const Checkpoint ck = make_checkpoint(config, params, result.adam, epoch);
      if (config.keep_epoch_checkpoints) {
        write_checkpoint(config.out_dir / epoch_checkpoint_name(epoch), ck);
      }
      if (rec.validation && (!best_score || *rec.validation > *best_score)) {
        write_checkpoint(config.out_dir / "best.ockp", ck);
      }
    }
    if (rec.validation && (!best_score || *rec.validation > *best_score)) {
      best_score = rec.validation;
      result.log.best_epoch = epoch;
    }
    rec.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    record(rec);
    if (write && rec.validation) {
      const auto path = config.out_dir / "validation.csv";
      const bool fresh = !std::filesystem::exists(path);
      std::ofstream vs(path, std::ios::app);
      if (fresh) vs << "epoch,one_shot_accuracy\n";
      vs << epoch << ',' << exact(*rec.validation) << '\n';
    }
  }
  if (write) {
    write_checkpoint(config.out_dir / "final.ockp",
                     make_checkpoint(config, params, result.adam, result.epoch));
  }
  return result;
}

}  // namespace orbit
