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

// Little-endian / big-endian primitive readers and writers for the on-disk
// formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "orbit/error.hpp"

namespace orbit::io {

template <typename U>
U byteswap(U v) {
  U out;
  auto* src = reinterpret_cast<const unsigned char*>(&v);
  auto* dst = reinterpret_cast<unsigned char*>(&out);
  for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
  return out;
}

template <typename U>
void write_le(std::ostream& os, U value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const std::string& what) {
  U value;
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(U))) {
    throw TruncatedError("unexpected end of file while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  return value;
}

template <typename U>
U read_be(std::istream& is, const std::string& what) {
  U value;
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(U))) {
    throw TruncatedError("unexpected end of file while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::little) value = byteswap(value);
  return value;
}

template <typename U>
void write_be(std::ostream& os, U value) {
  if constexpr (std::endian::native == std::endian::little) value = byteswap(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

/// Writes `count` floats little-endian.
inline void write_floats_le(std::ostream& os, const float* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), std::streamsize(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) write_le(os, data[i]);
  }
}

inline void read_floats_le(std::istream& is, float* data, std::size_t count,
                           const std::string& what) {
  if (!is.read(reinterpret_cast<char*>(data), std::streamsize(count * sizeof(float)))) {
    throw TruncatedError("unexpected end of file while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) data[i] = byteswap(data[i]);
  }
}

}  // namespace orbit::io
