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
#include <vector>

#include "orbit/tensor.hpp"

namespace orbit {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Images as [M,1,rows,cols] floats in [0,1] plus integer labels.
struct LabeledImages {
  Tensor images;
  std::vector<std::int64_t> labels;

  std::size_t count() const { return labels.size(); }
};

/// Reads an IDX image file (pixels scaled by 1/255).
Tensor read_idx_images(const std::filesystem::path& path);
std::vector<std::int64_t> read_idx_labels(const std::filesystem::path& path);

/// Reads a matching image/label pair. Throws BadMagicError,
/// TruncatedError or CountMismatchError.
LabeledImages load_idx(const std::filesystem::path& images,
                       const std::filesystem::path& labels);

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

/// Rows `offset .. offset+count` of a seeded permutation of the input.
/// Disjoint (offset, count) ranges under one seed give disjoint subsets.
LabeledImages select_subset(const LabeledImages& all, std::uint64_t shuffle_seed,
                            std::size_t offset, std::size_t count);

}  // namespace orbit
