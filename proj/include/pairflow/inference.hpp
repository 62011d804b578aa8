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

#include <string>
#include <unordered_map>

#include "pairflow/matching.hpp"

namespace pairflow {

// 2x2 concordant/discordant pair counts. n10 counts pairs whose treated unit
// was accepted and control rejected (b); n01 is the reverse (c).
struct PairedContingencyTable {
  long long n11 = 0;
  long long n10 = 0;
  long long n01 = 0;
  long long n00 = 0;

  long long total() const { return n11 + n10 + n01 + n00; }
  long long discordant() const { return n10 + n01; }
  void validate() const;
};

// Counts pairs by (treated outcome, control outcome); every id must have an
// outcome.
PairedContingencyTable tabulate_pairs(const MatchedPairs& pairs,
                                      const std::unordered_map<std::string, int>& outcomes);

// P(X <= k) (lower) or P(X >= k) for X ~ Binomial(n, p), by stable log-space
// summation of the smaller tail; absolute error below 1e-12. The McNemar
// kernel uses p = 1/2.
double binomial_tail(int n, int k, bool lower, double p = 0.5);

// Exact two-sided McNemar p-value: with n_d = b + c discordant pairs,
// p = min(1, 2 * min(P(X <= b), P(X >= b))) for X ~ Binomial(n_d, 1/2);
// n_d = 0 gives p = 1.
double mcnemar_exact(const PairedContingencyTable& table);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Exact binomial confidence interval by inverting the tail probabilities
// (bisection to 1e-10). x = 0 pins the lower end at 0; x = n pins the upper
// end at 1.
Interval clopper_pearson(int x, int n, double level);

struct OddsRatioResult {
  double point = 0.0;  // b / c; +infinity when c = 0 and b > 0
  Interval ci;
  double level = 0.95;
  std::string note;  // interpretation caveat attached to every result
};

// Conditional odds ratio over discordant pairs with the exact CI obtained by
// mapping clopper_pearson(b, b+c, level) through p -> p/(1-p). Errors when
// b = c = 0.
OddsRatioResult conditional_odds_ratio(const PairedContingencyTable& table,
                                       double level = 0.95);

// Structured-text inference record: cells, discordant count, p-value
// (unrounded and 3-decimal), odds ratio and CI (unrounded and 2-decimal).
std::string export_inference_json(const PairedContingencyTable& table, double p_value,
                                  const OddsRatioResult& odds);

}  // namespace pairflow
