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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "orbit/eval.hpp"
#include "orbit/key_values.hpp"
#include "orbit/orbit_dataset.hpp"

namespace orbit {
namespace {

namespace fs = std::filesystem;

const fs::path kData = fs::path(ORBIT_DATA_DIR) / "mnist5k";

int run(const std::string& args) {
  const std::string cmd = std::string(ORBIT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string gen_args(const fs::path& out, std::size_t offset, std::size_t count) {
  return "gen-orbits --images " + (kData / "images-idx3-ubyte").string() + " --labels " +
         (kData / "labels-idx1-ubyte").string() + " --transforms 3 --canvas 32 --offset " +
         std::to_string(offset) + " --count " + std::to_string(count) + " --out " + out.string();
}

std::string train_args(const fs::path& data, const fs::path& out) {
  return "train --mode oj --data " + data.string() +
         " --epochs 2 --batch-orbits 8 --batch-per-orbit 2 --channels 4,8 --embedding-dim 16"
         " --seed 3 --out " + out.string();
}

KeyValues outputs_of(const KeyValues& manifest) {
  KeyValues out;
  for (const auto& [k, v] : manifest)
    if (k.rfind("output.", 0) == 0) out[k] = v;
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("orbit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("gradcheck --no-such-flag"), 2);
  EXPECT_EQ(run("train --data x"), 2);  // --out missing
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, LibraryErrorsExitOne) {
  EXPECT_EQ(run("embed --checkpoint /nonexistent.ockp --data /nonexistent --out " +
                (dir / "e.oemb").string()),
            1);
}

TEST_F(Cli, PipelineWritesOutputsAndManifests) {
  ASSERT_EQ(run(gen_args(dir / "train", 0, 40)), 0);
  ASSERT_EQ(run(gen_args(dir / "held", 40, 20)), 0);
  const OrbitDataset held = load_orbit_dataset(dir / "held");
  EXPECT_EQ(held.orbit_count(), 20u);
  EXPECT_EQ(held.canvas(), 32u);

  ASSERT_EQ(run(train_args(dir / "train", dir / "run")), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "final.ockp"));
  const KeyValues m = read_key_values(dir / "run" / "run_manifest.txt");
  EXPECT_EQ(m.at("subcommand"), "train");
  EXPECT_EQ(m.at("flag.lr"), "0.001");  // defaults are recorded too
  EXPECT_EQ(m.at("flag.workers"), "1");
  EXPECT_TRUE(m.count("input.data.images.f32"));
  EXPECT_TRUE(m.count("output.run.final.ockp"));

  const fs::path emb = dir / "held.oemb";
  ASSERT_EQ(run("embed --checkpoint " + (dir / "run" / "final.ockp").string() + " --data " +
                (dir / "held").string() + " --transformed-only --out " + emb.string()),
            0);
  EXPECT_EQ(read_embeddings(emb).count(), 60u);
  EXPECT_TRUE(fs::exists(emb.string() + ".manifest"));

  EXPECT_EQ(run("eval-oneshot --embeddings " + emb.string() + " --resamples 5 --out " +
                (dir / "one.csv").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "one.csv"));
  EXPECT_EQ(run("eval-auc --embeddings " + emb.string()), 0);
  EXPECT_EQ(run("eval-retrieval --embeddings " + emb.string() + " --exclude none"), 0);
  EXPECT_EQ(run("eval-retrieval --embeddings " + emb.string() + " --exclude sideways"), 2);
  EXPECT_EQ(run("rectify --checkpoint " + (dir / "run" / "final.ockp").string() + " --data " +
                (dir / "held").string() + " --count 2 --out " + (dir / "rect").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "rect" / "rectify.txt"));
  EXPECT_EQ(run("export --embeddings " + emb.string() + " --out " + (dir / "t.tsv").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "t.tsv"));
}

TEST_F(Cli, IdenticalRunsGiveIdenticalDigests) {
  ASSERT_EQ(run(gen_args(dir / "a", 0, 24)), 0);
  ASSERT_EQ(run(gen_args(dir / "b", 0, 24)), 0);
  EXPECT_EQ(outputs_of(read_key_values(dir / "a" / "run_manifest.txt")).size(), 3u);
  const auto digests = [](const fs::path& m) {
    KeyValues kv = read_key_values(m);
    kv.erase("flag.out");
    return kv;
  };
  EXPECT_EQ(digests(dir / "a" / "run_manifest.txt"), digests(dir / "b" / "run_manifest.txt"));
  ASSERT_EQ(run(train_args(dir / "a", dir / "ra")), 0);
  ASSERT_EQ(run(train_args(dir / "a", dir / "rb")), 0);
  const KeyValues ra = outputs_of(read_key_values(dir / "ra" / "run_manifest.txt"));
  EXPECT_FALSE(ra.empty());
  EXPECT_EQ(ra, outputs_of(read_key_values(dir / "rb" / "run_manifest.txt")));
}

}  // namespace
}  // namespace orbit
