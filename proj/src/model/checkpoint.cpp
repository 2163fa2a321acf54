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

#include "orbit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "orbit/binary_io.hpp"
#include "orbit/error.hpp"
#include "orbit/files.hpp"

namespace orbit {

namespace {
constexpr char kMagic[4] = {'O', 'C', 'K', 'P'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw FormatError("checkpoint lacks tensor '" + name + "'");
  return *t;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string echo = format_key_values(ckpt.config);
  atomic_write(path, [&](std::ostream& os) {
    os.write(kMagic, 4);
    io::write_le<std::uint32_t>(os, kCheckpointVersion);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(echo.size()));
    os.write(echo.data(), std::streamsize(echo.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw ConfigError("checkpoint tensor name length out of range");
      }
      io::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), std::streamsize(name.size()));
      io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
      for (std::size_t d : t.shape()) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      io::write_floats_le(os, t.data(), t.size());
    }
  });
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedError(path.string() + ": missing checkpoint header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagicError(path.string() + ": not a checkpoint");
  const auto version = io::read_le<std::uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto echo_len = io::read_le<std::uint32_t>(is, "config length");
  std::string echo(echo_len, '\0');
  if (!is.read(echo.data(), echo_len)) throw TruncatedError(path.string() + ": truncated config");
  Checkpoint ckpt;
  ckpt.config = parse_key_values(echo, path.string());
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = io::read_le<std::uint16_t>(is, "tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw TruncatedError(path.string() + ": truncated name");
    const auto rank = io::read_le<std::uint8_t>(is, "tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint32_t>(is, "tensor dims");
    if (rank == 0 || shape_size(shape) == 0) {
      throw FormatError(path.string() + ": tensor '" + name + "' has no elements");
    }
    Tensor t(shape);
    io::read_floats_le(is, t.data(), t.size(), "tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void pack_params(const Params& params, Checkpoint& ckpt) {
  for (const auto& [k, v] : params.config.to_key_values()) ckpt.config[k] = v;
  auto add = [&](const std::string& name, const Tensor& t) { ckpt.tensors.emplace_back(name, t); };
  params.for_each_trainable(add);
  params.for_each_state(add);
}

Params unpack_params(const Checkpoint& ckpt) {
  const NetworkConfig config = NetworkConfig::from_key_values(ckpt.config);
  Params p = init_params(config);
  if (const Tensor* head = ckpt.find("head.weight")) {
    attach_exemplar_head(p, head->dim(0), 0);
  }
  auto load = [&](const std::string& name, Tensor& t) {
    const Tensor& src = ckpt.get(name);
    if (src.shape() != t.shape()) {
      throw CountMismatchError("checkpoint tensor '" + name + "' has shape " +
                               shape_string(src.shape()) + ", expected " + shape_string(t.shape()));
    }
    t = src;
  };
  p.for_each_trainable(load);
  p.for_each_state(load);
  return p;
}

}  // namespace orbit
