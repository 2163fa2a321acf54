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

#include <filesystem>

#include "orbit/tensor.hpp"

namespace orbit {

/// Writes the last two axes of `image` as binary PGM (P5, maxval 255).
/// Values are clamped to [0,1] and quantized as floor(255 v + 0.5).
void save_pgm(const Tensor& image, const std::filesystem::path& path);

/// Reads a P5 file with maxval 255 as [1,H,W] floats (byte / 255).
Tensor load_pgm(const std::filesystem::path& path);

}  // namespace orbit
