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

// Plain-text key=value records, one per line. Blank lines and lines
// starting with '#' are ignored when parsing.

#include <filesystem>
#include <map>
#include <string>

namespace orbit {

using KeyValues = std::map<std::string, std::string>;

std::string format_key_values(const KeyValues& values);
KeyValues parse_key_values(const std::string& text, const std::string& origin);

void write_key_values(const std::filesystem::path& path, const KeyValues& values);
KeyValues read_key_values(const std::filesystem::path& path);

}  // namespace orbit
