// Copyright 2026 The dseg Authors.
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

namespace dseg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or sizes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact could not be read back.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite value.
class TrainingFault : public Error {
 public:
  using Error::Error;
};

/// Reverse diffusion produced a non-finite value.
class SamplingFault : public Error {
 public:
  using Error::Error;
};

}  // namespace dseg
