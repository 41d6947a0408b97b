// Copyright (c) 2026 The HTCL Authors. All Rights Reserved.
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

namespace htcl {

/// Base of every error raised by the library. The CLI maps each subclass to
/// an exit status (configuration 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed arguments to a pure operation (shape mismatch, bad id, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input sequence too short to survive the convolution stack.
class InputTooShortError : public InputError {
 public:
  using InputError::InputError;
};

/// Checkpoint or parameter set does not match the requested configuration.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Truncated or otherwise unreadable file.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace htcl
