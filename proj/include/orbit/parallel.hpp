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

namespace orbit {

/// Number of worker threads used inside kernels. 1 runs everything inline.
void set_num_workers(std::size_t workers);
std::size_t num_workers();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
/// worker. Callers must not depend on the split for their results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Keeps freed heap memory in the process (glibc) so that the large
/// activation buffers of a training step are reused instead of being
/// returned to the kernel and faulted back in. Call once at startup.
void retain_freed_memory();

}  // namespace orbit
