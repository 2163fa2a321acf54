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

#include "orbit/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace orbit::log {
namespace {

std::mutex g_mutex;
std::atomic<std::size_t> g_warnings{0};

void default_sink(Level level, const std::string& message) {
  std::cerr << (level == Level::warning ? "warning: " : "") << message << '\n';
}

Sink& active_sink() {
  static Sink sink = default_sink;
  return sink;
}

void emit(Level level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (active_sink()) active_sink()(level, message);
}

}  // namespace

Sink set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  Sink previous = std::move(active_sink());
  active_sink() = sink ? std::move(sink) : Sink(default_sink);
  return previous;
}

void info(const std::string& message) { emit(Level::info, message); }

void warn(const std::string& message) {
  ++g_warnings;
  emit(Level::warning, message);
}

std::size_t warning_count() { return g_warnings; }

}  // namespace orbit::log
