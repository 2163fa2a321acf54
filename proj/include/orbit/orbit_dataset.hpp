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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orbit/idx.hpp"
#include "orbit/key_values.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

inline constexpr std::int64_t kUnlabeled = -1;

/// One equivalence class of images with its canonical (untransformed)
/// member.
struct OrbitSet {
  std::uint32_t id = 0;
  std::vector<std::uint32_t> members;
  std::uint32_t canonical = 0;
  std::int64_t label = kUnlabeled;
};

/// Images [M,1,S,S] partitioned into orbits.
class OrbitDataset {
 public:
  OrbitDataset() = default;
  OrbitDataset(Tensor images, std::vector<OrbitSet> orbits,
               std::map<std::string, std::string> metadata = {});

  const Tensor& images() const { return images_; }
  const std::vector<OrbitSet>& orbits() const { return orbits_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }

  std::size_t canvas() const { return images_.empty() ? 0 : images_.dim(2); }
  std::size_t image_count() const { return images_.empty() ? 0 : images_.dim(0); }
  std::size_t orbit_count() const { return orbits_.size(); }

  /// Position in orbits() of the orbit holding image `index`.
  std::size_t orbit_position(std::size_t index) const { return orbit_of_.at(index); }
  const OrbitSet& orbit_of(std::size_t index) const { return orbits_[orbit_position(index)]; }
  std::int64_t label_of(std::size_t index) const { return orbit_of(index).label; }
  bool has_labels() const;

  /// Stacks the selected images into [B,1,S,S].
  Tensor gather(const std::vector<std::size_t>& indices) const;

  /// Indices of every non-canonical image, in index order.
  std::vector<std::size_t> transformed_indices() const;

  /// Throws InternalError unless orbits are pairwise disjoint, cover every
  /// image exactly once and each canonical is a member of its own orbit.
  void validate() const;

 private:
  Tensor images_;
  std::vector<OrbitSet> orbits_;
  std::map<std::string, std::string> metadata_;
  std::vector<std::uint32_t> orbit_of_;
};

/// Pads each source image onto the centre of an S x S canvas as the
/// canonical element and adds `n_transforms` random affine warps of it.
/// Orbit i occupies indices [i*(n+1), (i+1)*(n+1)), canonical first. Each
/// orbit draws from its own generator derived from `seed`.
OrbitDataset build_orbit_dataset(const LabeledImages& sources, std::size_t n_transforms,
                                 std::size_t canvas, std::uint64_t seed);

/// Directory layout: manifest.txt (key=value), images.f32 (raw
/// little-endian floats), orbits.bin (per orbit: u32 id, u32 canonical,
/// u32 member count, u32 members..., i64 label).
void save_orbit_dataset(const OrbitDataset& dataset, const std::filesystem::path& dir);
OrbitDataset load_orbit_dataset(const std::filesystem::path& dir);

}  // namespace orbit
