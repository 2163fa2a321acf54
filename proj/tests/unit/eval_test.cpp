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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "orbit/error.hpp"
#include "orbit/eval.hpp"
#include "orbit/pgm.hpp"
#include "test_util.hpp"

namespace orbit {
namespace {

namespace fs = std::filesystem;

EmbeddingTable make_table(std::size_t k, const std::vector<float>& values,
                          const std::vector<std::int64_t>& labels,
                          std::vector<std::uint32_t> orbits = {}) {
  EmbeddingTable t;
  const std::size_t m = labels.size();
  t.vectors = Tensor({m, k}, values);
  t.labels = labels;
  if (orbits.empty()) {
    for (std::size_t i = 0; i < m; ++i) orbits.push_back(std::uint32_t(i));
  }
  t.orbit_ids = orbits;
  return t;
}

EmbeddingTable random_table(std::size_t m, std::size_t k, std::size_t classes, Rng& rng) {
  std::vector<float> v(m * k);
  for (float& x : v) x = float(rng.normal());
  std::vector<std::int64_t> labels(m);
  for (auto& l : labels) l = std::int64_t(rng.below(classes));
  return make_table(k, v, labels);
}

double sq(const EmbeddingTable& t, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t d = 0; d < t.dim(); ++d) {
    const double diff = double(t.vectors.row(i)[d]) - double(t.vectors.row(j)[d]);
    s += diff * diff;
  }
  return s;
}

// Area under the piecewise-linear ROC traced by sweeping every threshold.
double sweep_auc(const EmbeddingTable& t) {
  std::vector<std::pair<double, bool>> pairs;
  for (std::size_t i = 0; i < t.count(); ++i)
    for (std::size_t j = i + 1; j < t.count(); ++j)
      pairs.push_back({sq(t, i, j), t.labels[i] == t.labels[j]});
  std::set<double> thresholds;
  double np = 0, nn = 0;
  for (auto& [d, p] : pairs) {
    thresholds.insert(d);
    (p ? np : nn) += 1;
  }
  double area = 0, px = 0, py = 0;
  for (double th : thresholds) {
    double tp = 0, fp = 0;
    for (auto& [d, p] : pairs)
      if (d <= th) (p ? tp : fp) += 1;
    const double x = fp / nn, y = tp / np;
    area += (x - px) * (y + py) / 2;
    px = x;
    py = y;
  }
  return area;
}

TEST(OneShot, OneHotEmbeddingsAreExact) {
  std::vector<float> v;
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < 12; ++i) {
    const std::size_t c = i % 4;
    for (std::size_t d = 0; d < 4; ++d) v.push_back(d == c ? 1.0f : 0.0f);
    labels.push_back(std::int64_t(c));
  }
  const EmbeddingTable t = make_table(4, v, labels);
  const EvalReport r = one_shot_accuracy(t, 10, 3);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.std, 0.0);
  EXPECT_EQ(r.n, 10u);
}

TEST(OneShot, IdenticalEmbeddingsTieToLowestClass) {
  std::vector<std::int64_t> labels;
  for (std::size_t i = 0; i < 20; ++i) labels.push_back(std::int64_t(i % 4));
  const EmbeddingTable t = make_table(3, std::vector<float>(60, 0.25f), labels);
  // 16 rows remain, 4 of them in class 0.
  EXPECT_DOUBLE_EQ(one_shot_trial(t, {0, 1, 2, 3}), 0.25);
  EXPECT_DOUBLE_EQ(one_shot_accuracy(t, 7, 1).mean, 0.25);
}

TEST(OneShot, TwoDimensionalExample) {
  const EmbeddingTable t = make_table(
      2, {0, 0, 0, 1, 4, 4, 5, 5, 5, 4, 1, 1}, {0, 0, 0, 1, 1, 1});
  EXPECT_DOUBLE_EQ(one_shot_trial(t, {0, 3}), 0.5);
}

TEST(OneShot, MatchesBruteForce) {
  Rng rng(11);
  const EmbeddingTable t = random_table(20, 3, 4, rng);
  std::vector<std::size_t> ex;
  for (std::int64_t c = 0; c < 4; ++c) {
    auto it = std::find(t.labels.begin(), t.labels.end(), c);
    ASSERT_NE(it, t.labels.end());
    ex.push_back(std::size_t(it - t.labels.begin()));
  }
  double hits = 0, total = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    if (std::find(ex.begin(), ex.end(), i) != ex.end()) continue;
    std::vector<double> d;
    for (std::size_t e : ex) d.push_back(sq(t, i, e));
    const std::size_t c = std::size_t(std::min_element(d.begin(), d.end()) - d.begin());
    hits += t.labels[ex[c]] == t.labels[i];
    total += 1;
  }
  EXPECT_DOUBLE_EQ(one_shot_trial(t, ex), hits / total);
}

TEST(OneShot, RequiresLabels) {
  EmbeddingTable t = make_table(1, {0, 1, 2}, {0, 1, kUnlabeled});
  EXPECT_THROW(one_shot_accuracy(t, 3, 0), LabelError);
}

TEST(Auc, PerfectSeparation) {
  const EmbeddingTable t = make_table(1, {0, 0.1f, 5, 5.1f, 10, 10.1f}, {0, 0, 1, 1, 2, 2});
  const EvalReport r = roc_auc(t);
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_EQ(r.n, 1u);
}

TEST(Auc, AllEqualDistancesGiveHalf) {
  const EmbeddingTable t = make_table(2, std::vector<float>(12, 1.0f), {0, 0, 1, 1, 2, 2});
  EXPECT_DOUBLE_EQ(roc_auc(t).mean, 0.5);
}

TEST(Auc, MatchesThresholdSweep) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<float> v;
    for (int i = 0; i < 16; ++i) v.push_back(float(rng.below(3)));  // forces ties
    std::vector<std::int64_t> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(std::int64_t(rng.below(2)));
    labels[0] = 0;
    labels[1] = 0;
    labels[2] = 1;
    const EmbeddingTable t = make_table(2, v, labels);
    EXPECT_NEAR(roc_auc(t).mean, sweep_auc(t), 1e-9) << trial;
  }
}

TEST(Auc, InvariantUnderMonotoneDistanceTransforms) {
  Rng rng(13);
  EmbeddingTable t = random_table(30, 4, 3, rng);
  const double base = roc_auc(t).mean;
  EmbeddingTable scaled = t;
  for (float& x : scaled.vectors.values()) x *= 4.0f;  // distances x16
  EXPECT_DOUBLE_EQ(roc_auc(scaled).mean, base);
  EmbeddingTable shifted = t;
  for (std::size_t i = 0; i < shifted.count(); ++i)
    for (std::size_t d = 0; d < 4; ++d) shifted.vectors.row(i)[d] += 0.5f * float(d);
  EXPECT_NEAR(roc_auc(shifted).mean, base, 1e-12);
}

TEST(Auc, RandomLabelsNearChance) {
  Rng rng(14);
  const EmbeddingTable t = random_table(240, 8, 5, rng);
  const double auc = roc_auc(t).mean;
  EXPECT_GE(auc, 0.45);
  EXPECT_LE(auc, 0.55);
}

TEST(Auc, NeedsBothPairKinds) {
  EXPECT_THROW(roc_auc(make_table(1, {0, 1, 2}, {4, 4, 4})), LabelError);
  EXPECT_THROW(roc_auc(make_table(1, {0, 1, 2}, {0, 1, 2})), LabelError);
}

TEST(Top1, SeparatedClustersAreExact) {
  const EmbeddingTable t =
      make_table(1, {0, 0.1f, 0.2f, 9, 9.1f, 9.2f}, {0, 0, 0, 1, 1, 1}, {0, 1, 2, 3, 4, 5});
  const EvalReport r = top1_precision(t, same_orbit_exclusion(t));
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_EQ(r.config.at("queries"), "6");
}

TEST(Top1, ExclusionForcesAMiss) {
  // Row 1's same-class neighbour shares its orbit, so the nearest admissible
  // candidate is row 2 from the other class.
  const EmbeddingTable t = make_table(1, {0, 0.1f, 0.5f, 0.6f}, {0, 0, 1, 1}, {7, 7, 8, 9});
  const EvalReport r = top1_precision(t, same_orbit_exclusion(t));
  // rows 0,1 miss; rows 2,3 hit each other
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
}

TEST(Top1, DropsQueriesWithoutCandidates) {
  const EmbeddingTable t = make_table(1, {0, 1, 2, 3}, {0, 0, 1, 1});
  const EvalReport r = top1_precision(t, [](std::size_t q, std::size_t) { return q == 0; });
  EXPECT_EQ(r.config.at("dropped_queries"), "1");
  EXPECT_EQ(r.config.at("queries"), "3");
  const EmbeddingTable lone = make_table(1, {0, 1, 2}, {0, 0, 1}, {3, 3, 3});
  EXPECT_THROW(top1_precision(lone, same_orbit_exclusion(lone)), ConfigError);
}

TEST(Top1, MatchesBruteForce) {
  Rng rng(15);
  EmbeddingTable t = random_table(10, 2, 3, rng);
  for (std::size_t i = 0; i < 10; ++i) t.orbit_ids[i] = std::uint32_t(i / 2);
  double hits = 0, n = 0;
  for (std::size_t q = 0; q < 10; ++q) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < 10; ++c) {
      if (t.orbit_ids[c] == t.orbit_ids[q]) continue;
      if (sq(t, q, c) < best) {
        best = sq(t, q, c);
        arg = c;
      }
    }
    hits += t.labels[arg] == t.labels[q];
    n += 1;
  }
  EXPECT_DOUBLE_EQ(top1_precision(t, same_orbit_exclusion(t)).mean, hits / n);
}

TEST(Metrics, InvariantUnderRotation) {
  Rng rng(16);
  const EmbeddingTable t = random_table(40, 2, 4, rng);
  EmbeddingTable r = t;
  const double a = 0.7, c = std::cos(a), s = std::sin(a);
  for (std::size_t i = 0; i < r.count(); ++i) {
    const double x = t.vectors.row(i)[0], y = t.vectors.row(i)[1];
    r.vectors.row(i)[0] = float(c * x - s * y);
    r.vectors.row(i)[1] = float(s * x + c * y);
  }
  EXPECT_NEAR(roc_auc(r).mean, roc_auc(t).mean, 1e-9);
  EXPECT_NEAR(one_shot_accuracy(r, 20, 5).mean, one_shot_accuracy(t, 20, 5).mean, 1e-9);
  EXPECT_NEAR(top1_precision(r, same_orbit_exclusion(r)).mean,
              top1_precision(t, same_orbit_exclusion(t)).mean, 1e-9);
}

TEST(Reports, CsvLeavesStdBlankForSingleValues) {
  const fs::path p = fs::temp_directory_path() / "orbit_eval_reports.csv";
  EvalReport a{"auc", 0.75, 0.0, 1, {}};
  EvalReport b{"one_shot_accuracy", 0.5, 0.125, 20, {}};
  write_reports_csv(p, {a, b});
  std::ifstream in(p);
  std::string l0, l1, l2;
  std::getline(in, l0);
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(l0, "metric,mean,std,n");
  EXPECT_EQ(l1, "auc,0.750000,,1");
  EXPECT_EQ(l2, "one_shot_accuracy,0.500000,0.125000,20");
  fs::remove(p);
}

TEST(EmbeddingFile, RoundTrip) {
  Rng rng(17);
  EmbeddingTable t = random_table(9, 5, 3, rng);
  t.labels[4] = kUnlabeled;
  t.orbit_ids[2] = 123456;
  const fs::path p = fs::temp_directory_path() / "orbit_eval_rt.oemb";
  write_embeddings(p, t);
  const EmbeddingTable u = read_embeddings(p);
  ASSERT_EQ(u.count(), 9u);
  ASSERT_EQ(u.dim(), 5u);
  EXPECT_EQ(u.labels, t.labels);
  EXPECT_EQ(u.orbit_ids, t.orbit_ids);
  for (std::size_t i = 0; i < t.vectors.size(); ++i) EXPECT_EQ(u.vectors[i], t.vectors[i]);
  std::ifstream in(p, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "OEMB");
  fs::remove(p);
}

TEST(EmbeddingFile, EmptyTableRoundTrips) {
  const fs::path p = fs::temp_directory_path() / "orbit_eval_empty.oemb";
  write_embeddings(p, EmbeddingTable{});
  EXPECT_EQ(read_embeddings(p).count(), 0u);
  fs::remove(p);
}

TEST(EmbeddingFile, RejectsCorruptFiles) {
  Rng rng(18);
  const fs::path p = fs::temp_directory_path() / "orbit_eval_bad.oemb";
  write_embeddings(p, random_table(4, 3, 2, rng));
  const auto full = fs::file_size(p);
  fs::resize_file(p, full - 3);
  EXPECT_THROW(read_embeddings(p), TruncatedError);
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE0000000000000000";
  }
  EXPECT_THROW(read_embeddings(p), BadMagicError);
  fs::remove(p);
}

struct TinyModel : ::testing::Test {
  void SetUp() override {
    Rng rng(19);
    LabeledImages src{generate_tensor<float>({5, 1, 6, 6}, [&] { return rng.uniform(); }), {}};
    for (std::int64_t i = 0; i < 5; ++i) src.labels.push_back(i % 3);
    ds = build_orbit_dataset(src, 3, 8, 4);
    NetworkConfig net;
    net.canvas = 8;
    net.channels = {2, 3};
    net.embedding_dim = 6;
    net.seed = 2;
    params = init_params(net);
  }
  OrbitDataset ds;
  Params params;
};

TEST_F(TinyModel, EmbeddingsIgnoreBatchSize) {
  const EmbeddingTable a = embed_dataset(params, ds, {}, 1);
  const EmbeddingTable b = embed_dataset(params, ds, {}, 7);
  ASSERT_EQ(a.count(), ds.image_count());
  ASSERT_EQ(a.dim(), 6u);
  for (std::size_t i = 0; i < a.vectors.size(); ++i) EXPECT_EQ(a.vectors[i], b.vectors[i]);
  const EmbeddingTable c = embed_dataset(params, ds, {}, 7);
  for (std::size_t i = 0; i < a.vectors.size(); ++i) EXPECT_EQ(b.vectors[i], c.vectors[i]);
  EXPECT_TRUE(a.has_labels());
}

TEST_F(TinyModel, EmbedsSelectedRowsInOrder) {
  const EmbeddingTable all = embed_dataset(params, ds);
  const EmbeddingTable some = embed_dataset(params, ds, {7, 2, 11});
  ASSERT_EQ(some.count(), 3u);
  const std::size_t idx[] = {7, 2, 11};
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(some.orbit_ids[r], ds.orbit_of(idx[r]).id);
    for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(some.vectors.row(r)[d], all.vectors.row(idx[r])[d]);
  }
}

TEST_F(TinyModel, RejectsCanvasMismatch) {
  NetworkConfig net = params.config;
  net.canvas = 16;
  EXPECT_THROW(embed_dataset(init_params(net), ds), DimensionError);
}

TEST_F(TinyModel, RectifyWritesImagesAtCanvasSize) {
  const fs::path dir = fs::temp_directory_path() / "orbit_eval_rectify";
  fs::remove_all(dir);
  const RectificationError err = rectify_dump(params, ds, {1, 5}, dir, {{"note", "x"}});
  EXPECT_EQ(err.images, 2u);
  for (const char* suffix : {"_canonical.pgm", "_input.pgm", "_output.pgm"}) {
    const Tensor img = load_pgm(dir / ("5" + std::string(suffix)));
    EXPECT_EQ(img.shape(), (Shape{1, 8, 8}));
  }
  EXPECT_TRUE(fs::exists(dir / "rectify.txt"));
  EXPECT_GE(err.output_to_canonical, 0.0);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace orbit
