// Copyright 2026 The plcfe Authors.
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

#ifndef PLCFE_ERRORS_HPP_
#define PLCFE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plcfe {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An object was used in the wrong lifecycle state (e.g. backward without
// a forward cache).
class StateError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An argument violates a documented precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Not enough eligible clusters or samples to build a task.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A configuration value is out of range. `field()` names the offending key.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& why)
      : Error("invalid value for '" + field + "': " + why), field_(field) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace plcfe

#endif  // PLCFE_ERRORS_HPP_
