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

#include "orbit/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "orbit/error.hpp"

namespace orbit {

void save_pgm(const Tensor& image, const std::filesystem::path& path) {
  if (image.rank() < 2) throw DimensionError("save_pgm needs at least two axes");
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  if (image.size() != h * w) throw DimensionError("save_pgm expects a single-channel image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(h * w);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(double(image[i]), 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

Tensor load_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5") throw BadMagicError(path.string() + ": not a binary PGM");
  if (maxval != 255 || w == 0 || h == 0) throw FormatError(path.string() + ": unsupported PGM");
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(w * h);
  if (!is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()))) {
    throw TruncatedError(path.string() + ": PGM payload truncated");
  }
  Tensor out({1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = float(bytes[i]) / 255.0f;
  return out;
}

}  // namespace orbit
