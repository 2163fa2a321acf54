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

#include "orbit/orbit_dataset.hpp"

#include <fstream>
#include <limits>

#include "orbit/affine.hpp"
#include "orbit/binary_io.hpp"
#include "orbit/files.hpp"
#include "orbit/parallel.hpp"
#include "orbit/random.hpp"

namespace orbit {
namespace {

constexpr std::uint64_t kOrbitStream = 0x6f72626974ULL;  // "orbit"

// Maps each image to the position of its orbit, enforcing the partition.
std::vector<std::uint32_t> index_partition(std::size_t m, const std::vector<OrbitSet>& orbits) {
  constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> owner(m, unset);
  for (std::size_t o = 0; o < orbits.size(); ++o) {
    const OrbitSet& orbit = orbits[o];
    bool has_canonical = false;
    for (std::uint32_t idx : orbit.members) {
      if (idx >= m) {
        throw InternalError("orbit " + std::to_string(orbit.id) + " references image " +
                            std::to_string(idx) + " beyond " + std::to_string(m));
      }
      if (owner[idx] != unset) {
        throw InternalError("image " + std::to_string(idx) + " belongs to two orbits");
      }
      owner[idx] = std::uint32_t(o);
      has_canonical |= idx == orbit.canonical;
    }
    if (!has_canonical) {
      throw InternalError("canonical of orbit " + std::to_string(orbit.id) +
                          " is not one of its members");
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (owner[i] == unset) {
      throw InternalError("image " + std::to_string(i) + " is not in any orbit");
    }
  }
  return owner;
}

}  // namespace

OrbitDataset::OrbitDataset(Tensor images, std::vector<OrbitSet> orbits,
                           std::map<std::string, std::string> metadata)
    : images_(std::move(images)), orbits_(std::move(orbits)), metadata_(std::move(metadata)) {
  if (images_.rank() != 4 || images_.dim(1) != 1 || images_.dim(2) != images_.dim(3)) {
    throw DimensionError("orbit dataset images must be [M,1,S,S], got " +
                         shape_string(images_.shape()));
  }
  orbit_of_ = index_partition(image_count(), orbits_);
}

void OrbitDataset::validate() const { index_partition(image_count(), orbits_); }

bool OrbitDataset::has_labels() const {
  if (orbits_.empty()) return false;
  for (const auto& o : orbits_) {
    if (o.label == kUnlabeled) return false;
  }
  return true;
}

Tensor OrbitDataset::gather(const std::vector<std::size_t>& indices) const {
  const std::size_t s = canvas(), row = s * s;
  Tensor out({indices.size(), 1, s, s});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= image_count()) throw DimensionError("gather: index out of range");
    std::copy_n(images_.data() + indices[i] * row, row, out.data() + i * row);
  }
  return out;
}

std::vector<std::size_t> OrbitDataset::transformed_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < image_count(); ++i) {
    if (orbit_of(i).canonical != i) out.push_back(i);
  }
  return out;
}

OrbitDataset build_orbit_dataset(const LabeledImages& sources, std::size_t n_transforms,
                                 std::size_t canvas, std::uint64_t seed) {
  const Tensor& src = sources.images;
  if (src.rank() != 4 || src.dim(1) != 1) {
    throw DimensionError("source images must be [M,1,h,w]");
  }
  const std::size_t m = src.dim(0), h = src.dim(2), w = src.dim(3);
  if (h > canvas || w > canvas) {
    throw ConfigError("canvas " + std::to_string(canvas) + " is smaller than the " +
                      std::to_string(h) + "x" + std::to_string(w) + " source images");
  }
  const std::size_t per_orbit = n_transforms + 1;
  const std::size_t top = (canvas - h) / 2, left = (canvas - w) / 2;
  const std::size_t plane = canvas * canvas;

  Tensor images({m * per_orbit, 1, canvas, canvas});
  std::vector<OrbitSet> orbits(m);
  parallel_for(m, [&](std::size_t i) {
    Tensor canonical({1, canvas, canvas});
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        canonical[(top + y) * canvas + left + x] = src[(i * h + y) * w + x];
      }
    }
    const std::size_t base = i * per_orbit;
    std::copy_n(canonical.data(), plane, images.data() + base * plane);
    Rng rng(derive_seed(seed, kOrbitStream, i));
    for (std::size_t t = 1; t <= n_transforms; ++t) {
      Tensor warped = warp_bilinear(canonical, affine_matrix(sample_affine(rng), canvas));
      std::copy_n(warped.data(), plane, images.data() + (base + t) * plane);
    }
    OrbitSet& orbit = orbits[i];
    orbit.id = std::uint32_t(i);
    orbit.canonical = std::uint32_t(base);
    for (std::size_t t = 0; t < per_orbit; ++t) orbit.members.push_back(std::uint32_t(base + t));
    orbit.label = i < sources.labels.size() ? sources.labels[i] : kUnlabeled;
  });

  std::map<std::string, std::string> meta{
      {"canvas", std::to_string(canvas)},
      {"n_transforms", std::to_string(n_transforms)},
      {"seed", std::to_string(seed)},
      {"sources", std::to_string(m)},
      {"warp", "bilinear-inverse-map-zero-padding"},
      {"composition", "scale,shear-x,rotate about center,then translate"},
  };
  return OrbitDataset(std::move(images), std::move(orbits), std::move(meta));
}

void save_orbit_dataset(const OrbitDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto meta = dataset.metadata();
  meta["canvas"] = std::to_string(dataset.canvas());
  meta["images"] = std::to_string(dataset.image_count());
  meta["orbits"] = std::to_string(dataset.orbit_count());
  meta["format"] = "orbit-dataset/1";
  atomic_write(dir / "images.f32", [&](std::ostream& os) {
    io::write_floats_le(os, dataset.images().data(), dataset.images().size());
  });
  atomic_write(dir / "orbits.bin", [&](std::ostream& os) {
    for (const OrbitSet& o : dataset.orbits()) {
      io::write_le(os, o.id);
      io::write_le(os, o.canonical);
      io::write_le(os, std::uint32_t(o.members.size()));
      for (std::uint32_t m : o.members) io::write_le(os, m);
      io::write_le(os, o.label);
    }
  });
  write_key_values(dir / "manifest.txt", meta);
}

OrbitDataset load_orbit_dataset(const std::filesystem::path& dir) {
  auto meta = read_key_values(dir / "manifest.txt");
  auto number = [&](const std::string& key) -> std::size_t {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("dataset manifest lacks '" + key + "'");
    return std::stoull(it->second);
  };
  const std::size_t canvas = number("canvas"), count = number("images"),
                    n_orbits = number("orbits");

  Tensor images({count, 1, canvas, canvas});
  {
    std::ifstream is(dir / "images.f32", std::ios::binary);
    if (!is) throw IoError("cannot open " + (dir / "images.f32").string());
    io::read_floats_le(is, images.data(), images.size(), "dataset images");
    if (is.peek() != std::char_traits<char>::eof()) {
      throw CountMismatchError("images.f32 is longer than the manifest says");
    }
  }
  std::vector<OrbitSet> orbits(n_orbits);
  {
    std::ifstream is(dir / "orbits.bin", std::ios::binary);
    if (!is) throw IoError("cannot open " + (dir / "orbits.bin").string());
    for (OrbitSet& o : orbits) {
      o.id = io::read_le<std::uint32_t>(is, "orbit id");
      o.canonical = io::read_le<std::uint32_t>(is, "canonical index");
      const auto n = io::read_le<std::uint32_t>(is, "member count");
      o.members.resize(n);
      for (auto& m : o.members) m = io::read_le<std::uint32_t>(is, "member index");
      o.label = io::read_le<std::int64_t>(is, "class label");
    }
  }
  return OrbitDataset(std::move(images), std::move(orbits), std::move(meta));
}

}  // namespace orbit
