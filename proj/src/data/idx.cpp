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

#include "orbit/idx.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "orbit/binary_io.hpp"
#include "orbit/random.hpp"

namespace orbit {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    std::ostringstream os;
    os << path.string() << ": bad IDX magic 0x" << std::hex << got << " (expected 0x" << want
       << ")";
    throw BadMagicError(os.str());
  }
}

}  // namespace

Tensor read_idx_images(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  expect_magic(io::read_be<std::uint32_t>(is, "IDX magic"), kIdxImagesMagic, path);
  const std::uint32_t count = io::read_be<std::uint32_t>(is, "image count");
  const std::uint32_t rows = io::read_be<std::uint32_t>(is, "row count");
  const std::uint32_t cols = io::read_be<std::uint32_t>(is, "column count");
  if (count == 0 || rows == 0 || cols == 0) {
    throw FormatError(path.string() + ": empty IDX image file");
  }
  std::vector<unsigned char> bytes(std::size_t(count) * rows * cols);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()))) {
    throw TruncatedError(path.string() + ": pixel payload shorter than " +
                         std::to_string(bytes.size()) + " bytes");
  }
  Tensor images({count, 1, rows, cols});
  for (std::size_t i = 0; i < bytes.size(); ++i) images[i] = float(bytes[i]) / 255.0f;
  return images;
}

std::vector<std::int64_t> read_idx_labels(const std::filesystem::path& path) {
  std::ifstream is = open_input(path);
  expect_magic(io::read_be<std::uint32_t>(is, "IDX magic"), kIdxLabelsMagic, path);
  const std::uint32_t count = io::read_be<std::uint32_t>(is, "label count");
  std::vector<unsigned char> bytes(count);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()))) {
    throw TruncatedError(path.string() + ": label payload shorter than " +
                         std::to_string(count) + " bytes");
  }
  return {bytes.begin(), bytes.end()};
}

LabeledImages load_idx(const std::filesystem::path& images,
                       const std::filesystem::path& labels) {
  LabeledImages out{read_idx_images(images), read_idx_labels(labels)};
  if (out.images.dim(0) != out.labels.size()) {
    throw CountMismatchError(std::to_string(out.images.dim(0)) + " images but " +
                             std::to_string(out.labels.size()) + " labels");
  }
  return out;
}

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  io::write_be(os, kIdxImagesMagic);
  io::write_be(os, count);
  io::write_be(os, rows);
  io::write_be(os, cols);
  os.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  io::write_be(os, kIdxLabelsMagic);
  io::write_be(os, std::uint32_t(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

LabeledImages select_subset(const LabeledImages& all, std::uint64_t shuffle_seed,
                            std::size_t offset, std::size_t count) {
  if (offset + count > all.count() || count == 0) {
    throw ConfigError("subset [" + std::to_string(offset) + ", " +
                      std::to_string(offset + count) + ") out of range for " +
                      std::to_string(all.count()) + " images");
  }
  std::vector<std::size_t> order(all.count());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  Shape shape = all.images.shape();
  shape[0] = count;
  LabeledImages out{Tensor(shape), {}};
  const std::size_t row = all.images.row_size();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[offset + i];
    std::copy_n(all.images.data() + src * row, row, out.images.data() + i * row);
    out.labels.push_back(all.labels[src]);
  }
  return out;
}

}  // namespace orbit
