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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "orbit/checkpoint.hpp"
#include "orbit/error.hpp"
#include "orbit/eval.hpp"
#include "orbit/files.hpp"
#include "orbit/gradcheck.hpp"
#include "orbit/idx.hpp"
#include "orbit/key_values.hpp"
#include "orbit/log.hpp"
#include "orbit/orbit_dataset.hpp"
#include "orbit/parallel.hpp"
#include "orbit/trainer.hpp"

#ifndef ORBIT_VERSION
#define ORBIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace orbit;

namespace {

template <typename V>
std::string show(const V& v) {
  if constexpr (std::is_same_v<V, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<V, fs::path>) {
    return v.string();
  } else if constexpr (std::is_same_v<V, bool>) {
    return v ? "1" : "0";
  } else if constexpr (std::is_floating_point_v<V>) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  } else {
    return std::to_string(v);
  }
}

// Registers long-form flags on a subcommand and remembers how to print
// their resolved values into the run manifest.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename V>
  CLI::Option* add(const std::string& name, V& value, const std::string& help) {
    printers_.push_back([name, &value] { return std::pair{name, show(value)}; });
    return app_->add_option("--" + name, value, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    printers_.push_back([name, &value] { return std::pair{name, show(value)}; });
    return app_->add_flag("--" + name, value, help);
  }

  void record(KeyValues& kv) const {
    for (const auto& p : printers_) {
      auto [name, value] = p();
      kv["flag." + name] = value;
    }
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::function<std::pair<std::string, std::string>()>> printers_;
};

// Digest of every regular file under `p` (or of `p` itself), keyed by
// `prefix` plus the relative name.
void add_digests(KeyValues& kv, const std::string& prefix, const fs::path& p,
                 const std::function<bool(const fs::path&)>& keep = {}) {
  if (fs::is_regular_file(p)) {
    kv[prefix] = file_digest(p);
    return;
  }
  if (!fs::is_directory(p)) return;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file() && (!keep || keep(e.path()))) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) kv[prefix + "." + f.filename().string()] = file_digest(f);
}

struct Run {
  std::string subcommand;
  Flags flags;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  KeyValues inputs;
  KeyValues outputs;

  void write_manifest(const fs::path& path) const {
    KeyValues kv;
    kv["subcommand"] = subcommand;
    kv["tool_version"] = ORBIT_VERSION;
    kv["seed"] = std::to_string(seed);
    flags.record(kv);
    for (const auto& [k, v] : inputs) kv["input." + k] = v;
    for (const auto& [k, v] : outputs) kv["output." + k] = v;
    write_key_values(path, kv);
  }
};

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".manifest"); }

bool is_dataset_payload(const fs::path& p) { return p.filename() != "run_manifest.txt"; }

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("bad index '" + item + "'");
    }
  }
  return out;
}

std::vector<std::size_t> parse_channels(const std::string& text) {
  std::vector<std::size_t> c = parse_indices(text);
  if (c.empty()) throw ConfigError("--channels needs at least one value");
  return c;
}

void print_reports(const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) std::cout << format_report(r) << '\n';
}

// ------------------------------------------------------------ gen-orbits

struct GenOrbits {
  fs::path images, labels, out;
  std::size_t transforms = 32, canvas = 64, offset = 0, count = 0;
  std::uint64_t seed = 7, shuffle_seed = 0;

  void bind(Flags& f) {
    f.add("images", images, "IDX image file")->required();
    f.add("labels", labels, "IDX label file")->required();
    f.add("transforms", transforms, "random affine warps per source image");
    f.add("canvas", canvas, "output image side length");
    f.add("seed", seed, "warp seed");
    f.add("shuffle-seed", shuffle_seed, "permutation seed for source selection");
    f.add("offset", offset, "first source in the permuted order");
    f.add("count", count, "number of sources (0 = all from offset)");
    f.add("out", out, "output dataset directory")->required();
  }

  void run(Run& r) const {
    r.seed = seed;
    const LabeledImages all = load_idx(images, labels);
    if (offset > all.count()) throw ConfigError("--offset beyond the source count");
    const std::size_t n = count == 0 ? all.count() - offset : count;
    const LabeledImages src = select_subset(all, shuffle_seed, offset, n);
    OrbitDataset ds = build_orbit_dataset(src, transforms, canvas, seed);
    ds.metadata()["shuffle_seed"] = std::to_string(shuffle_seed);
    ds.metadata()["source_offset"] = std::to_string(offset);
    ds.metadata()["source_count"] = std::to_string(n);
    save_orbit_dataset(ds, out);
    r.inputs["images"] = file_digest(images);
    r.inputs["labels"] = file_digest(labels);
    add_digests(r.outputs, "data", out, is_dataset_payload);
    r.write_manifest(out / "run_manifest.txt");
    log::info("wrote " + std::to_string(ds.orbit_count()) + " orbits, " +
              std::to_string(ds.image_count()) + " images to " + out.string());
  }
};

// ----------------------------------------------------------------- train

struct Train {
  std::string mode = "oj", channels = "16,32,64,128";
  fs::path data, validation, resume, out;
  std::size_t epochs = 20, batch_orbits = 64, batch_per_orbit = 4, convs_per_block = 2,
              pool_size = 2, pool_stride = 2, embedding_dim = 1024, checkpoint_every = 1,
              validation_resamples = 20;
  double alpha = 0.2, lambda1 = 1.0, lambda2 = 1.0, lr = 1e-3, beta1 = 0.9, beta2 = 0.999,
         epsilon = 1e-8;
  bool scale_swap = false, unnormalized = false;
  std::uint64_t seed = 7;

  void bind(Flags& f) {
    f.add("mode", mode, "oj, ot, oe, st, ex or ae");
    f.add("data", data, "training dataset directory")->required();
    f.add("validation", validation, "labeled dataset for early stopping");
    f.add("epochs", epochs, "epoch budget");
    f.add("alpha", alpha, "triplet margin");
    f.add("lambda1", lambda1, "triplet weight");
    f.add("lambda2", lambda2, "reconstruction weight");
    f.flag("scale-swap", scale_swap, "divide the triplet term by k and reconstruction by d");
    f.add("batch-orbits", batch_orbits, "orbits per batch");
    f.add("batch-per-orbit", batch_per_orbit, "members per orbit in a batch");
    f.add("channels", channels, "comma-separated channels per block");
    f.add("convs-per-block", convs_per_block, "convolutions per block");
    f.add("pool-size", pool_size, "max-pool window");
    f.add("pool-stride", pool_stride, "max-pool stride");
    f.add("embedding-dim", embedding_dim, "embedding size k");
    f.flag("unnormalized", unnormalized, "skip the final L2 normalization");
    f.add("lr", lr, "Adam learning rate");
    f.add("beta1", beta1, "Adam beta1");
    f.add("beta2", beta2, "Adam beta2");
    f.add("epsilon", epsilon, "Adam epsilon");
    f.add("checkpoint-every", checkpoint_every, "epochs between checkpoints");
    f.add("validation-resamples", validation_resamples, "one-shot resamples per validation");
    f.add("seed", seed, "run seed");
    f.add("resume", resume, "checkpoint to continue from");
    f.add("out", out, "run directory")->required();
  }

  void run(Run& r) const {
    r.seed = seed;
    const OrbitDataset ds = load_orbit_dataset(data);
    TrainConfig c;
    c.mode = parse_loss_mode(mode);
    c.epochs = epochs;
    c.loss.alpha = alpha;
    c.loss.lambda1 = lambda1;
    c.loss.lambda2 = lambda2;
    c.loss.scale_swap = scale_swap;
    c.plan.orbits_per_batch = batch_orbits;
    c.plan.samples_per_orbit = batch_per_orbit;
    c.net.canvas = ds.canvas();
    c.net.channels = parse_channels(channels);
    c.net.convs_per_block = convs_per_block;
    c.net.pool_size = pool_size;
    c.net.pool_stride = pool_stride;
    c.net.embedding_dim = embedding_dim;
    c.net.normalize_embedding = !unnormalized;
    c.adam = {lr, beta1, beta2, epsilon};
    c.seed = seed;
    c.checkpoint_every = checkpoint_every;
    c.validation_resamples = validation_resamples;
    c.out_dir = out;

    add_digests(r.inputs, "data", data, is_dataset_payload);
    OrbitDataset val;
    if (!validation.empty()) {
      val = load_orbit_dataset(validation);
      add_digests(r.inputs, "validation", validation, is_dataset_payload);
    }
    std::optional<ResumePoint> point;
    if (!resume.empty()) {
      point = resume_from(read_checkpoint(resume));
      r.inputs["resume"] = file_digest(resume);
    }
    const TrainResult result = train(c, ds, validation.empty() ? nullptr : &val, point);
    if (result.log.best_epoch) {
      log::info("best validation epoch " + std::to_string(*result.log.best_epoch));
    }
    // train_log.csv carries wall-clock times, so it is left out.
    add_digests(r.outputs, "run", out, [](const fs::path& p) {
      return p.extension() == ".ockp" || p.filename() == "validation.csv";
    });
    r.write_manifest(out / "run_manifest.txt");
  }
};

// ----------------------------------------------------------------- embed

struct Embed {
  fs::path checkpoint, data, out;
  bool transformed_only = false;
  std::size_t batch_size = 256;

  void bind(Flags& f) {
    f.add("checkpoint", checkpoint, "trained checkpoint")->required();
    f.add("data", data, "dataset directory")->required();
    f.flag("transformed-only", transformed_only, "skip canonical images");
    f.add("batch-size", batch_size, "inference batch size");
    f.add("out", out, "output embedding file")->required();
  }

  void run(Run& r) const {
    const Params params = unpack_params(read_checkpoint(checkpoint));
    const OrbitDataset ds = load_orbit_dataset(data);
    EmbeddingTable table = embed_dataset(
        params, ds, transformed_only ? ds.transformed_indices() : std::vector<std::size_t>{},
        batch_size);
    table.source = file_digest(checkpoint);
    write_embeddings(out, table);
    r.inputs["checkpoint"] = table.source;
    add_digests(r.inputs, "data", data, is_dataset_payload);
    r.outputs["embeddings"] = file_digest(out);
    r.write_manifest(sidecar(out));
    log::info("embedded " + std::to_string(table.count()) + " images");
  }
};

// ------------------------------------------------------------ evaluation

struct Evaluate {
  fs::path embeddings, out;
  std::size_t resamples = 100;
  std::uint64_t seed = 7;
  std::string exclude = "same-orbit";

  void bind_common(Flags& f) {
    f.add("embeddings", embeddings, "embedding file")->required();
    f.add("out", out, "CSV report path");
  }

  void finish(Run& r, const EvalReport& report) const {
    print_reports({report});
    if (out.empty()) return;
    write_reports_csv(out, {report});
    r.inputs["embeddings"] = file_digest(embeddings);
    r.outputs["report"] = file_digest(out);
    r.write_manifest(sidecar(out));
  }
};

// ---------------------------------------------------------------- rectify

struct Rectify {
  fs::path checkpoint, data, out;
  std::string indices;
  std::size_t count = 16;

  void bind(Flags& f) {
    f.add("checkpoint", checkpoint, "trained checkpoint")->required();
    f.add("data", data, "dataset directory")->required();
    f.add("indices", indices, "comma-separated image indices");
    f.add("count", count, "first N transformed images when --indices is empty");
    f.add("out", out, "output directory")->required();
  }

  void run(Run& r) const {
    const Params params = unpack_params(read_checkpoint(checkpoint));
    const OrbitDataset ds = load_orbit_dataset(data);
    std::vector<std::size_t> rows = parse_indices(indices);
    if (rows.empty()) {
      rows = ds.transformed_indices();
      rows.resize(std::min(rows.size(), count));
    }
    const KeyValues notes = {{"checkpoint", checkpoint.string()}, {"data", data.string()}};
    const RectificationError e = rectify_dump(params, ds, rows, out, notes);
    std::cout << "images " << e.images << " mse(output,canonical) " << e.output_to_canonical
              << " mse(input,canonical) " << e.input_to_canonical << '\n';
    r.inputs["checkpoint"] = file_digest(checkpoint);
    add_digests(r.inputs, "data", data, is_dataset_payload);
    add_digests(r.outputs, "rectify", out,
                [](const fs::path& p) { return p.filename() != "run_manifest.txt"; });
    r.write_manifest(out / "run_manifest.txt");
  }
};

// ----------------------------------------------------------------- export

struct Export {
  fs::path embeddings, out;
  std::string delimiter = "\t";

  void bind(Flags& f) {
    f.add("embeddings", embeddings, "embedding file")->required();
    f.add("delimiter", delimiter, "field separator");
    f.add("out", out, "text table: orbit, label, then one column per dimension")->required();
  }

  void run(Run& r) const {
    const EmbeddingTable t = read_embeddings(embeddings);
    atomic_write(out, [&](std::ostream& os) {
      os << "orbit" << delimiter << "label";
      for (std::size_t d = 0; d < t.dim(); ++d) os << delimiter << 'e' << d;
      os << '\n';
      char buf[32];
      for (std::size_t i = 0; i < t.count(); ++i) {
        os << t.orbit_ids[i] << delimiter << t.labels[i];
        for (float v : t.vectors.row(i)) {
          std::snprintf(buf, sizeof buf, "%.9g", double(v));
          os << delimiter << buf;
        }
        os << '\n';
      }
    });
    r.inputs["embeddings"] = file_digest(embeddings);
    r.outputs["table"] = file_digest(out);
    r.write_manifest(sidecar(out));
  }
};

// -------------------------------------------------------------- gradcheck

struct GradCheck {
  std::uint64_t seed = 1234;
  fs::path out;

  void bind(Flags& f) {
    f.add("seed", seed, "suite seed");
    f.add("out", out, "CSV of per-check results");
  }

  bool run(Run& r) const {
    r.seed = seed;
    const std::vector<GradCheckResult> results = run_gradient_suite({seed});
    bool ok = true;
    std::ostringstream csv;
    csv << "check,max_rel_error,tolerance,compared,skipped,passed\n";
    for (const auto& g : results) {
      ok = ok && g.passed();
      char line[160];
      std::snprintf(line, sizeof line, "%-28s %-4s rel %.3e tol %.0e compared %zu skipped %zu",
                    g.name.c_str(), g.passed() ? "ok" : "FAIL", g.max_rel_error, g.tolerance,
                    g.compared, g.skipped);
      std::cout << line << '\n';
      csv << g.name << ',' << show(g.max_rel_error) << ',' << show(g.tolerance) << ','
          << g.compared << ',' << g.skipped << ',' << (g.passed() ? 1 : 0) << '\n';
    }
    std::cout << (ok ? "all gradient checks passed" : "gradient checks FAILED") << '\n';
    if (!out.empty()) {
      atomic_write(out, [&](std::ostream& os) { os << csv.str(); });
      r.outputs["report"] = file_digest(out);
      r.write_manifest(sidecar(out));
    }
    return ok;
  }
};

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Orbit metric learning: datasets, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ORBIT_VERSION);

  std::vector<std::unique_ptr<Run>> runs;
  auto sub = [&](const std::string& name, const std::string& help) -> Run& {
    CLI::App* s = app.add_subcommand(name, help);
    runs.push_back(std::make_unique<Run>(Run{name, Flags(s), 1, 0, {}, {}}));
    Run& r = *runs.back();
    r.flags.add("workers", r.workers, "worker threads (1 is bitwise reproducible)")
        ->check(CLI::PositiveNumber);
    return r;
  };

  GenOrbits gen;
  Run& r_gen = sub("gen-orbits", "build an orbit dataset from IDX files");
  gen.bind(r_gen.flags);

  Train tr;
  Run& r_train = sub("train", "train an embedding");
  tr.bind(r_train.flags);

  Embed emb;
  Run& r_embed = sub("embed", "embed a dataset with a checkpoint");
  emb.bind(r_embed.flags);

  Evaluate one, auc, ret;
  Run& r_one = sub("eval-oneshot", "one-shot nearest-exemplar accuracy");
  one.bind_common(r_one.flags);
  r_one.flags.add("resamples", one.resamples, "exemplar draws");
  r_one.flags.add("seed", one.seed, "exemplar draw seed");
  Run& r_auc = sub("eval-auc", "pairwise verification AUC");
  auc.bind_common(r_auc.flags);
  Run& r_ret = sub("eval-retrieval", "top-1 retrieval precision");
  ret.bind_common(r_ret.flags);
  r_ret.flags.add("exclude", ret.exclude, "candidate exclusion: same-orbit or none")
      ->check(CLI::IsMember({"same-orbit", "none"}));

  Rectify rect;
  Run& r_rect = sub("rectify", "dump decoder outputs next to inputs and canonicals");
  rect.bind(r_rect.flags);

  Export exp;
  Run& r_exp = sub("export", "write embeddings as a delimited text table");
  exp.bind(r_exp.flags);

  GradCheck gc;
  Run& r_gc = sub("gradcheck", "finite-difference check of every gradient");
  gc.bind(r_gc.flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& r : runs) {
      if (!r->flags.app()->parsed()) continue;
      set_num_workers(r->workers);
      if (r.get() == &r_gen) gen.run(*r);
      if (r.get() == &r_train) tr.run(*r);
      if (r.get() == &r_embed) emb.run(*r);
      if (r.get() == &r_one) {
        r->seed = one.seed;
        one.finish(*r, one_shot_accuracy(read_embeddings(one.embeddings), one.resamples, one.seed));
      }
      if (r.get() == &r_auc) auc.finish(*r, roc_auc(read_embeddings(auc.embeddings)));
      if (r.get() == &r_ret) {
        const EmbeddingTable t = read_embeddings(ret.embeddings);
        const ExclusionPredicate none = [](std::size_t, std::size_t) { return false; };
        ret.finish(*r, top1_precision(t, ret.exclude == "none" ? none : same_orbit_exclusion(t)));
      }
      if (r.get() == &r_rect) rect.run(*r);
      if (r.get() == &r_exp) exp.run(*r);
      if (r.get() == &r_gc) return gc.run(*r) ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[unexpected]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
