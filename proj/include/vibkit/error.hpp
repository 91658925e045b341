// Copyright 2026 The vibkit Authors.
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

#ifndef VIBKIT_ERROR_HPP_
#define VIBKIT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace vibkit {

// Every error raised by the library derives from Error. `kind()` is a stable
// machine-readable tag used by the CLI and the HTTP service.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

class BoundViolation : public Error {
 public:
  explicit BoundViolation(const std::string& m) : Error("bound_violation", m) {}
};

class UnsupportedRatio : public Error {
 public:
  explicit UnsupportedRatio(const std::string& m)
      : Error("unsupported_ratio", m) {}
};

class TooLong : public Error {
 public:
  explicit TooLong(const std::string& m) : Error("too_long", m) {}
};

class RateError : public Error {
 public:
  explicit RateError(const std::string& m) : Error("sample_rate", m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& m) : Error("non_finite", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& m) : Error("version", m) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error("schema", m) {}
};

}  // namespace vibkit

#endif  // VIBKIT_ERROR_HPP_
