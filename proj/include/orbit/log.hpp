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

#include <cstddef>
#include <functional>
#include <string>

namespace orbit::log {

enum class Level { info, warning };

using Sink = std::function<void(Level, const std::string&)>;

/// Replaces the active sink (default: stderr). Returns the previous one.
Sink set_sink(Sink sink);

void info(const std::string& message);
void warn(const std::string& message);

/// Number of warnings emitted since process start.
std::size_t warning_count();

}  // namespace orbit::log
