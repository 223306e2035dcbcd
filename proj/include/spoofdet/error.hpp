// Copyright (c) 2026 The spoofdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace spoofdet {

// Base class for every error this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operator shape mismatches. Messages name the offending shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An API precondition was violated (non-scalar loss, single-class EER, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A byte stream is not the format it claims to be (bad magic, dtype, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A stream has the right framing but inconsistent content (truncation).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// A recognized format carries a version this build cannot read.
class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Text input could not be parsed; messages carry the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Cross-record consistency violations (duplicate ids, label disagreement).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (gradients, losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace spoofdet
