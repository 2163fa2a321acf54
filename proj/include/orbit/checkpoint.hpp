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

// Binary checkpoint: "OCKP", u32 version, u32 length + key=value config
// echo, then named tensors until end of file, each as u16 name length,
// name, u8 rank, u32 dims, little-endian float32 payload.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "orbit/key_values.hpp"
#include "orbit/network.hpp"
#include "orbit/tensor.hpp"

namespace orbit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  KeyValues config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // FormatError if absent
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends the network config to ckpt.config and every trainable and
/// running-statistic tensor to ckpt.tensors.
void pack_params(const Params& params, Checkpoint& ckpt);

/// Rebuilds parameters from a checkpoint; every tensor's shape must match
/// the echoed network config.
Params unpack_params(const Checkpoint& ckpt);

}  // namespace orbit
