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

#include <stdexcept>
#include <string>

namespace orbit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short diagnostic class, printed by the CLI on failure.
  virtual const char* kind() const noexcept { return "error"; }
};

#define ORBIT_DEFINE_ERROR(Name, Base, Kind)                           \
  class Name : public Base {                                           \
   public:                                                             \
    using Base::Base;                                                  \
    const char* kind() const noexcept override { return Kind; }        \
  };

ORBIT_DEFINE_ERROR(DimensionError, Error, "dimension-mismatch")
ORBIT_DEFINE_ERROR(ConfigError, Error, "config")
ORBIT_DEFINE_ERROR(IoError, Error, "io")
ORBIT_DEFINE_ERROR(FormatError, Error, "format")
ORBIT_DEFINE_ERROR(BadMagicError, FormatError, "bad-magic")
ORBIT_DEFINE_ERROR(TruncatedError, FormatError, "truncated")
ORBIT_DEFINE_ERROR(CountMismatchError, FormatError, "count-mismatch")
ORBIT_DEFINE_ERROR(SingularMatrixError, Error, "singular-matrix")
ORBIT_DEFINE_ERROR(InternalError, Error, "internal")
ORBIT_DEFINE_ERROR(LabelError, Error, "label")
ORBIT_DEFINE_ERROR(DivergenceError, Error, "diverged")

#undef ORBIT_DEFINE_ERROR

}  // namespace orbit
