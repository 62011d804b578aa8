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

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace pairflow {

struct ForestConfig {
  int trees = 200;
  int min_leaf = 5;  // both children of any split keep at least this many rows
  int mtry = 0;      // features tried per node; 0 means ceil(sqrt(p))
};

// Out-of-bag accuracy of a random forest on binary labels. Bootstrap samples
// and per-node feature draws derive deterministically from (seed, tree
// index), so the statistic is a fixed function of (X, y).
//
// Voting: each out-of-bag tree casts the majority class of the leaf the unit
// lands in (leaves split 50/50 abstain, as do trees that could not split at
// the root). A unit with tied or absent votes scores half a point.
double forest_oob_accuracy(const Eigen::MatrixXd& X, const std::vector<int>& y,
                           const ForestConfig& config, std::uint64_t seed);

}  // namespace pairflow
