// Copyright 2026 The Pairflow Authors
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
#include <vector>

namespace pairflow {

// Base class for all pairflow errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration: unknown keys, out-of-range knobs, missing files.
// CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (bad row, duplicate id, ...).
// CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A matching problem without a feasible solution. CLI exit code 3.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what, long long achieved = -1)
      : Error(what), achieved_flow(achieved) {}
  long long achieved_flow;
};

// Numerical failure (non-convergence, singular system). CLI exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

// IRLS gave up before reaching the gradient tolerance; carries the last
// iterate so callers can inspect how far the fit got.
class NonConvergenceError : public NumericError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> beta)
      : NumericError(what), last_beta(std::move(beta)) {}
  std::vector<double> last_beta;
};

}  // namespace pairflow
