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

#include "orbit/key_values.hpp"

#include <fstream>
#include <sstream>

#include "orbit/error.hpp"
#include "orbit/files.hpp"

namespace orbit {

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("key/value pair cannot be stored: '" + k + "'");
    }
    out += k + '=' + v + '\n';
  }
  return out;
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(origin + ": malformed line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& values) {
  const std::string text = format_key_values(values);
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

}  // namespace orbit
