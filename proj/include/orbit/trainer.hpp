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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "orbit/checkpoint.hpp"
#include "orbit/key_values.hpp"
#include "orbit/losses.hpp"
#include "orbit/network.hpp"
#include "orbit/optim.hpp"
#include "orbit/orbit_dataset.hpp"
#include "orbit/random.hpp"

namespace orbit {

/// Inputs plus exactly the targets the mode's loss consumes.
template <typename T>
struct MiniBatch {
  BasicTensor<T> inputs;               // [B,1,S,S]
  BasicTensor<T> targets;              // canonical (OE, OJ) or inputs (AE); else empty
  std::vector<std::int64_t> ids;       // orbit ids (OT, OJ) or class labels (ST)
  std::vector<std::size_t> labels;     // dense orbit positions (EX)
};

MiniBatch<float> assemble_batch(LossMode mode, const OrbitDataset& dataset,
                                const std::vector<std::size_t>& indices);

template <typename U, typename T>
MiniBatch<U> cast_batch(const MiniBatch<T>& batch) {
  return {batch.inputs.template cast<U>(),
          batch.targets.empty() ? BasicTensor<U>() : batch.targets.template cast<U>(), batch.ids,
          batch.labels};
}

/// The loss configuration a mode actually optimizes: OT and ST drop the
/// reconstruction term, OE and AE drop the triplet term.
LossConfig effective_loss_config(LossMode mode, const LossConfig& cfg);

template <typename T>
struct StepOutput {
  double loss = 0.0;
  double triplet_term = 0.0;         // unweighted
  double reconstruction_term = 0.0;  // unweighted
  std::vector<Triplet> triplets;
  ModelParams<T> grads;
};

/// Train-mode forward, loss and backward for one batch. Triplets are mined
/// with `mining_rng` unless `fixed_triplets` is given. Updates the running
/// statistics in `params`.
/// With compute_gradients false only the loss is evaluated and grads is
/// left empty.
template <typename T>
StepOutput<T> loss_and_gradients(ModelParams<T>& params, const MiniBatch<T>& batch, LossMode mode,
                                 const LossConfig& loss, Rng* mining_rng,
                                 const std::vector<Triplet>* fixed_triplets = nullptr,
                                 bool compute_gradients = true);

struct TrainConfig {
  LossMode mode = LossMode::OJ;
  std::size_t epochs = 20;
  LossConfig loss;
  BatchPlan plan;
  NetworkConfig net;
  AdamConfig adam;
  std::uint64_t seed = 0;             // drives init, batch plans and mining
  std::size_t checkpoint_every = 1;  // also the validation cadence
  bool keep_epoch_checkpoints = true;
  bool log_initial_loss = true;      // logs epoch 0 before any update
  std::size_t validation_resamples = 20;
  std::filesystem::path out_dir;     // empty: nothing is written

  /// Checks mode requirements against the dataset, including that the
  /// batch plan is feasible.
  void validate(const OrbitDataset& dataset) const;
  KeyValues to_key_values() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
  std::optional<double> validation;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
};

struct TrainResult {
  Params params;
  AdamState adam;
  TrainLog log;
  std::size_t epoch = 0;  // last completed epoch
};

/// Everything needed to continue a run exactly.
struct ResumePoint {
  Params params;
  AdamState adam;
  std::size_t epoch = 0;
};

/// Runs epochs (resume.epoch + 1) .. config.epochs. Each epoch plans
/// batches from (seed, epoch) and mines with (seed, epoch, batch), so a
/// resumed run follows the uninterrupted trajectory bit for bit. When
/// out_dir is set, writes train_log.csv, epoch_NNNN.ockp, final.ockp and,
/// with a labeled validation set, best.ockp (one-shot accuracy).
TrainResult train(const TrainConfig& config, const OrbitDataset& dataset,
                  const OrbitDataset* validation = nullptr,
                  const std::optional<ResumePoint>& resume = std::nullopt);

Checkpoint make_checkpoint(const TrainConfig& config, const Params& params, const AdamState& adam,
                           std::size_t epoch);
ResumePoint resume_from(const Checkpoint& ckpt);

struct ScoredCheckpoint {
  std::size_t epoch = 0;
  std::filesystem::path path;
  std::optional<double> score;
};

/// The scored checkpoint with the highest score, earliest epoch on ties.
/// Throws ConfigError when nothing is scored.
const ScoredCheckpoint& early_stop_select(const std::vector<ScoredCheckpoint>& checkpoints);

std::string epoch_checkpoint_name(std::size_t epoch);

}  // namespace orbit
