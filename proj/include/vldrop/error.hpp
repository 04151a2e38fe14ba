// Copyright 2026 The vldrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace vldrop {

// Root of the library's exception hierarchy. Every error the library throws
// derives from this, so callers (notably the CLI) can map categories to exit
// codes without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument or configuration value is outside its documented domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An API was called in the wrong state (e.g. backward twice without reset).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A problem size exceeds what an exact oracle can enumerate.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A file on disk does not match its documented layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// A training run failed (divergence, non-finite loss).
class RunError : public Error {
 public:
  explicit RunError(const std::string& what) : Error(what), iteration_(-1) {}
  RunError(const std::string& what, long long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}

  // -1 when the failure is not tied to a training step.

  long long iteration() const noexcept { return iteration_; }

 private:
  long long iteration_ = 0;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

}  // namespace vldrop
