// Copyright 2026 The clipdiv Authors. All Rights Reserved.
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

namespace clipdiv {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad scalar parameter, malformed input list, out-of-range label, empty batch.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is numerically degenerate (zero-norm vector, all-degenerate batch).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// On-disk manifest or blob does not match the file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Datasets, prompts and training settings are inconsistent with each other.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace clipdiv
