// Copyright 2026-present the icecache project
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

namespace icecache {

// Every failure raised by the library derives from Error so callers can map
// the kind to a process exit code.
enum class ErrorKind {
  kConfig,
  kInput,
  kConsistency,
  kPolicy,
  kScaleViolation,
  kDegenerateQuery,
  kIo,
  kInvariant,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, "config error: " + what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what)
      : Error(ErrorKind::kInput, "input error: " + what) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what)
      : Error(ErrorKind::kConsistency, "consistency error: " + what) {}
};

class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& what)
      : Error(ErrorKind::kPolicy, "policy error: " + what) {}
};

class ScaleViolation : public Error {
 public:
  explicit ScaleViolation(const std::string& what)
      : Error(ErrorKind::kScaleViolation, "scale violation: " + what) {}
};

class DegenerateQuery : public Error {
 public:
  explicit DegenerateQuery(const std::string& what)
      : Error(ErrorKind::kDegenerateQuery, "degenerate query: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what)
      : Error(ErrorKind::kIo, "i/o error: " + what) {}
};

// Raised by the check_invariants() walkers; the message names the module.
class InvariantViolation : public Error {
 public:
  InvariantViolation(const std::string& module, const std::string& what)
      : Error(ErrorKind::kInvariant,
              "invariant violation [" + module + "]: " + what) {}
};

}  // namespace icecache
