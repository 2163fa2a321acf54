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

#include "orbit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "orbit/binary_io.hpp"
#include "orbit/error.hpp"
#include "orbit/files.hpp"
#include "orbit/log.hpp"
#include "orbit/parallel.hpp"
#include "orbit/pgm.hpp"
#include "orbit/random.hpp"

namespace orbit {

namespace {

constexpr char kMagic[4] = {'O', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kOneShotStream = 0x1540;

double row_distance(const Tensor& v, std::size_t i, std::size_t j) {
  const std::size_t k = v.dim(1);
  const float* a = v.data() + i * k;
  const float* b = v.data() + j * k;
  double s = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    const double d = double(a[t]) - double(b[t]);
    s += d * d;
  }
  return s;
}

void require_labels(const EmbeddingTable& table, const char* what) {
  table.validate();
  if (!table.has_labels()) {
    throw LabelError(std::string(what) + " needs a class label on every row");
  }
}

EvalReport summarize(std::string metric, const std::vector<double>& values) {
  EvalReport r;
  r.metric = std::move(metric);
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / double(values.size() - 1));
  }
  return r;
}

}  // namespace

bool EmbeddingTable::has_labels() const {
  return count() > 0 && std::none_of(labels.begin(), labels.end(),
                                     [](std::int64_t l) { return l == kUnlabeled; });
}

void EmbeddingTable::validate() const {
  const std::size_t rows = vectors.empty() ? 0 : vectors.dim(0);
  if (rows != orbit_ids.size() || rows != labels.size() ||
      (!vectors.empty() && vectors.rank() != 2)) {
    throw InternalError("embedding table: " + std::to_string(rows) + " rows but " +
                        std::to_string(orbit_ids.size()) + " orbit ids and " +
                        std::to_string(labels.size()) + " labels");
  }
}

EmbeddingTable embed_dataset(const Params& params, const OrbitDataset& dataset,
                             const std::vector<std::size_t>& indices, std::size_t batch_size) {
  if (dataset.canvas() != params.config.canvas) {
    throw DimensionError("dataset canvas " + std::to_string(dataset.canvas()) +
                         " does not match network canvas " + std::to_string(params.config.canvas));
  }
  std::vector<std::size_t> rows = indices;
  if (rows.empty()) {
    rows.resize(dataset.image_count());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  EmbeddingTable table;
  const std::size_t k = params.config.embedding_dim;
  if (!rows.empty()) table.vectors = Tensor({rows.size(), k});
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    const std::vector<std::size_t> chunk(rows.begin() + start, rows.begin() + end);
    const ForwardRecord<float> rec = encode(params, dataset.gather(chunk));
    std::copy(rec.embedding.values().begin(), rec.embedding.values().end(),
              table.vectors.data() + start * k);
  }
  for (std::size_t r : rows) {
    table.orbit_ids.push_back(dataset.orbit_of(r).id);
    table.labels.push_back(dataset.label_of(r));
  }
  return table;
}

EmbeddingTable select_rows(const EmbeddingTable& table, const std::vector<std::size_t>& rows) {
  table.validate();
  EmbeddingTable out;
  out.source = table.source;
  if (rows.empty()) return out;
  const std::size_t k = table.dim();
  out.vectors = Tensor({rows.size(), k});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = table.vectors.row(rows.at(i));
    std::copy(src.begin(), src.end(), out.vectors.row(i).begin());
    out.orbit_ids.push_back(table.orbit_ids[rows[i]]);
    out.labels.push_back(table.labels[rows[i]]);
  }
  return out;
}

// ------------------------------------------------------------- one-shot

double one_shot_trial(const EmbeddingTable& table, const std::vector<std::size_t>& exemplars) {
  require_labels(table, "one-shot classification");
  std::vector<bool> is_exemplar(table.count(), false);
  for (std::size_t e : exemplars) is_exemplar.at(e) = true;
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < table.count(); ++i) {
    if (is_exemplar[i]) continue;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < exemplars.size(); ++c) {
      const double d = row_distance(table.vectors, i, exemplars[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += table.labels[exemplars[best]] == table.labels[i];
    ++total;
  }
  if (total == 0) throw ConfigError("one-shot: nothing left to classify");
  return double(hits) / double(total);
}

EvalReport one_shot_accuracy(const EmbeddingTable& table, std::size_t n_resamples,
                             std::uint64_t seed) {
  require_labels(table, "one-shot classification");
  if (n_resamples == 0) throw ConfigError("one-shot: n_resamples must be positive");
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.count(); ++i) by_class[table.labels[i]].push_back(i);
  if (by_class.size() < 2) throw LabelError("one-shot: need at least two classes");
  Rng rng(derive_seed(seed, kOneShotStream));
  std::vector<double> accuracies;
  std::vector<std::size_t> exemplars;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    exemplars.clear();
    for (const auto& [label, rows] : by_class) exemplars.push_back(rows[rng.below(rows.size())]);
    accuracies.push_back(one_shot_trial(table, exemplars));
  }
  EvalReport report = summarize("one_shot_accuracy", accuracies);
  report.config["classes"] = std::to_string(by_class.size());
  report.config["rows"] = std::to_string(table.count());
  report.config["seed"] = std::to_string(seed);
  return report;
}

// ------------------------------------------------------------------ AUC

EvalReport roc_auc(const EmbeddingTable& table) {
  require_labels(table, "verification AUC");
  const std::size_t m = table.count();
  struct Pair {
    double distance;
    bool positive;
  };
  std::vector<Pair> pairs;
  pairs.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      pairs.push_back({row_distance(table.vectors, i, j), table.labels[i] == table.labels[j]});
    }
  }
  std::uint64_t n_pos = 0;
  for (const Pair& p : pairs) n_pos += p.positive;
  const std::uint64_t n_neg = pairs.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw LabelError("verification AUC needs both same-class and different-class pairs");
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return a.distance < b.distance; });
  // A positive scores a full point against every strictly farther negative.
  std::uint64_t concordant = 0, ties = 0, neg_seen = 0;
  for (std::size_t g = 0; g < pairs.size();) {
    std::size_t end = g;
    std::uint64_t pos_g = 0, neg_g = 0;
    while (end < pairs.size() && pairs[end].distance == pairs[g].distance) {
      pairs[end].positive ? ++pos_g : ++neg_g;
      ++end;
    }
    concordant += pos_g * (n_neg - neg_seen - neg_g);
    ties += pos_g * neg_g;
    neg_seen += neg_g;
    g = end;
  }
  EvalReport r;
  r.metric = "roc_auc";
  r.mean = (double(concordant) + 0.5 * double(ties)) / (double(n_pos) * double(n_neg));
  r.n = 1;
  r.config["positive_pairs"] = std::to_string(n_pos);
  r.config["negative_pairs"] = std::to_string(n_neg);
  return r;
}

// ------------------------------------------------------------ retrieval

EvalReport top1_precision(const EmbeddingTable& table, const ExclusionPredicate& exclude) {
  require_labels(table, "top-1 retrieval");
  const std::size_t m = table.count();
  std::vector<int> outcome(m, -1);  // -1 dropped, 0 miss, 1 hit
  parallel_for(m, [&](std::size_t q) {
    std::size_t best = m;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
      if (c == q || exclude(q, c)) continue;
      const double d = row_distance(table.vectors, q, c);
      if (best == m || d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best != m) outcome[q] = table.labels[best] == table.labels[q] ? 1 : 0;
  });
  std::size_t hits = 0, counted = 0, dropped = 0;
  for (int o : outcome) {
    if (o < 0) {
      ++dropped;
    } else {
      ++counted;
      hits += std::size_t(o);
    }
  }
  if (dropped > 0) log::warn("top-1 retrieval: " + std::to_string(dropped) +
                             " queries had no admissible candidate and were dropped");
  if (counted == 0) throw ConfigError("top-1 retrieval: every query was excluded");
  EvalReport r;
  r.metric = "top1_precision";
  r.mean = double(hits) / double(counted);
  r.n = 1;
  r.config["queries"] = std::to_string(counted);
  r.config["dropped_queries"] = std::to_string(dropped);
  return r;
}

ExclusionPredicate same_orbit_exclusion(const EmbeddingTable& table) {
  return [ids = table.orbit_ids](std::size_t q, std::size_t c) { return ids[q] == ids[c]; };
}

// --------------------------------------------------------------- export

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  table.validate();
  atomic_write(path, [&](std::ostream& os) {
    os.write(kMagic, 4);
    io::write_le<std::uint32_t>(os, kVersion);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(table.count()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(table.dim()));
    if (!table.vectors.empty()) io::write_floats_le(os, table.vectors.data(), table.vectors.size());
    for (std::uint32_t id : table.orbit_ids) io::write_le(os, id);
    for (std::int64_t l : table.labels) io::write_le(os, l);
  });
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedError(path.string() + ": missing header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagicError(path.string() + ": not an embedding file");
  if (io::read_le<std::uint32_t>(is, "version") != kVersion) {
    throw FormatError(path.string() + ": unsupported embedding file version");
  }
  const std::size_t m = io::read_le<std::uint32_t>(is, "row count");
  const std::size_t k = io::read_le<std::uint32_t>(is, "dimension");
  EmbeddingTable table;
  if (m > 0) {
    if (k == 0) throw FormatError(path.string() + ": rows of dimension 0");
    table.vectors = Tensor({m, k});
    io::read_floats_le(is, table.vectors.data(), table.vectors.size(), "embedding vectors");
  }
  table.orbit_ids.resize(m);
  for (auto& id : table.orbit_ids) id = io::read_le<std::uint32_t>(is, "orbit ids");
  table.labels.resize(m);
  for (auto& l : table.labels) l = io::read_le<std::int64_t>(is, "labels");
  if (is.peek() != std::char_traits<char>::eof()) {
    throw CountMismatchError(path.string() + ": trailing bytes after " + std::to_string(m) + " rows");
  }
  table.source = path.filename().string();
  return table;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << r.metric << ',' << r.mean << ',';
  if (r.n >= 2) os << r.std;
  os << ',' << r.n;
  return os.str();
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  atomic_write(path, [&](std::ostream& os) {
    os << "metric,mean,std,n\n";
    for (const EvalReport& r : reports) os << format_report(r) << '\n';
  });
}

// --------------------------------------------------------- rectification

namespace {

template <typename F>
void for_each_reconstruction(const Params& params, const OrbitDataset& dataset,
                             const std::vector<std::size_t>& indices, std::size_t batch_size,
                             F&& visit) {
  if (dataset.canvas() != params.config.canvas) {
    throw DimensionError("dataset canvas does not match network canvas");
  }
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    const std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + end);
    ForwardRecord<float> rec = encode(params, dataset.gather(chunk));
    Tensor out = decode(params, rec);
    for (float& v : out.values()) v = std::clamp(v, 0.0f, 1.0f);
    for (std::size_t i = 0; i < chunk.size(); ++i) visit(chunk[i], out.row(i));
  }
}

}  // namespace

RectificationError rectification_error(const Params& params, const OrbitDataset& dataset,
                                       const std::vector<std::size_t>& indices,
                                       std::size_t batch_size) {
  RectificationError e;
  std::size_t pixels = 0;
  for_each_reconstruction(params, dataset, indices, batch_size,
                          [&](std::size_t index, std::span<const float> out) {
    const auto x = dataset.images().row(index);
    const auto c = dataset.images().row(dataset.orbit_of(index).canonical);
    for (std::size_t p = 0; p < out.size(); ++p) {
      const double oc = double(out[p]) - c[p], ic = double(x[p]) - c[p], oi = double(out[p]) - x[p];
      e.output_to_canonical += oc * oc;
      e.input_to_canonical += ic * ic;
      e.output_to_input += oi * oi;
      e.abs_output_to_canonical += std::abs(oc);
      e.abs_output_to_input += std::abs(oi);
    }
    pixels += out.size();
    ++e.images;
  });
  if (pixels > 0) {
    e.output_to_canonical /= double(pixels);
    e.input_to_canonical /= double(pixels);
    e.output_to_input /= double(pixels);
    e.abs_output_to_canonical /= double(pixels);
    e.abs_output_to_input /= double(pixels);
  }
  return e;
}

RectificationError rectify_dump(const Params& params, const OrbitDataset& dataset,
                                const std::vector<std::size_t>& indices,
                                const std::filesystem::path& out_dir, const KeyValues& notes) {
  std::filesystem::create_directories(out_dir);
  const std::size_t s = dataset.canvas();
  for_each_reconstruction(params, dataset, indices, 64,
                          [&](std::size_t index, std::span<const float> out) {
    const std::string stem = std::to_string(index);
    const std::vector<std::size_t> pair{dataset.orbit_of(index).canonical, index};
    Tensor both = dataset.gather(pair);
    both.reshape({2, s, s});
    save_pgm(Tensor({1, s, s}, {both.row(0).begin(), both.row(0).end()}),
             out_dir / (stem + "_canonical.pgm"));
    save_pgm(Tensor({1, s, s}, {both.row(1).begin(), both.row(1).end()}),
             out_dir / (stem + "_input.pgm"));
    save_pgm(Tensor({1, s, s}, {out.begin(), out.end()}), out_dir / (stem + "_output.pgm"));
  });
  const RectificationError e = rectification_error(params, dataset, indices);
  KeyValues meta = notes;
  meta["images"] = std::to_string(e.images);
  meta["mse_output_canonical"] = std::to_string(e.output_to_canonical);
  meta["mse_input_canonical"] = std::to_string(e.input_to_canonical);
  meta["mse_output_input"] = std::to_string(e.output_to_input);
  write_key_values(out_dir / "rectify.txt", meta);
  return e;
}

}  // namespace orbit
