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

// Distance-based evaluation of embeddings. All distances are squared
// Euclidean, computed in double precision.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "orbit/key_values.hpp"
#include "orbit/network.hpp"
#include "orbit/orbit_dataset.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

struct EmbeddingTable {
  Tensor vectors;                       // [M,k]; empty when M == 0
  std::vector<std::uint32_t> orbit_ids;
  std::vector<std::int64_t> labels;     // kUnlabeled where unknown
  std::string source;                   // checkpoint identifier

  std::size_t count() const { return orbit_ids.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors.dim(1); }
  /// True when every row carries a class label.
  bool has_labels() const;
  /// Throws InternalError if the metadata lengths disagree with the rows.
  void validate() const;
};

/// Infer-mode embeddings of `indices` (every image when empty), in the
/// given order. Rows do not depend on the batch size.
EmbeddingTable embed_dataset(const Params& params, const OrbitDataset& dataset,
                             const std::vector<std::size_t>& indices = {},
                             std::size_t batch_size = 256);

/// A table restricted to the given rows.
EmbeddingTable select_rows(const EmbeddingTable& table, const std::vector<std::size_t>& rows);

struct EvalReport {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 and unreported when n < 2
  std::size_t n = 0;
  KeyValues config;
};

/// Accuracy of nearest-exemplar classification for one choice of exemplar
/// rows (one per class, ordered by class id). Every other row is
/// classified; ties go to the lowest class id.
double one_shot_trial(const EmbeddingTable& table, const std::vector<std::size_t>& exemplars);

/// Mean and sample std of one_shot_trial over random exemplar draws.
EvalReport one_shot_accuracy(const EmbeddingTable& table, std::size_t n_resamples,
                             std::uint64_t seed);

/// Verification AUC over all unordered pairs, same class = positive,
/// smaller distance = more similar, ties count one half.
EvalReport roc_auc(const EmbeddingTable& table);

using ExclusionPredicate = std::function<bool(std::size_t query, std::size_t candidate)>;

/// Fraction of queries whose nearest admissible candidate (ties to the
/// lowest row) shares the query's class. Queries left without candidates
/// are dropped and counted in config["dropped_queries"].
EvalReport top1_precision(const EmbeddingTable& table, const ExclusionPredicate& exclude);

/// Excludes candidates from the query's own orbit.
ExclusionPredicate same_orbit_exclusion(const EmbeddingTable& table);

/// "OEMB", u32 version 1, u32 M, u32 k, M*k float32, M u32 orbit ids,
/// M i64 labels, all little-endian.
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

/// metric,mean,std,n with std left blank when n < 2.
void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
std::string format_report(const EvalReport& report);

struct RectificationError {
  double output_to_canonical = 0.0;  // mean per-pixel squared error
  double input_to_canonical = 0.0;
  double output_to_input = 0.0;
  double abs_output_to_canonical = 0.0;  // mean per-pixel absolute error
  double abs_output_to_input = 0.0;
  std::size_t images = 0;
};

/// Errors of decode(encode(x)) (clamped to [0,1]) against each image's
/// canonical and against itself.
RectificationError rectification_error(const Params& params, const OrbitDataset& dataset,
                                       const std::vector<std::size_t>& indices,
                                       std::size_t batch_size = 256);

/// Writes <index>_canonical.pgm, <index>_input.pgm and <index>_output.pgm
/// per index plus rectify.txt with `notes` and the error summary.
RectificationError rectify_dump(const Params& params, const OrbitDataset& dataset,
                                const std::vector<std::size_t>& indices,
                                const std::filesystem::path& out_dir, const KeyValues& notes);

}  // namespace orbit
