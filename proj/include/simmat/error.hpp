// Copyright 2026 The SimMAT Authors.
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

namespace simmat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel counts disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or an unsupported combination of options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Optimizer bookkeeping is inconsistent with the parameter set.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A serialized file is malformed or does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied value is out of its domain.
class InputError : public Error {
 public:
  using Error::Error;
};

/// An operation was applied to an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A requested target cannot be reached by any admissible knob value.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Procedural generation gave up after its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem access failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace simmat
