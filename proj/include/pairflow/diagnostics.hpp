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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pairflow/corpus.hpp"
#include "pairflow/forest.hpp"
#include "pairflow/matching.hpp"

namespace pairflow {

// |mean_t - mean_c| / sqrt((var_t + var_c) / 2) with unbiased sample
// variances; 0/0 -> 0. Each sample needs at least 2 values.
double smd(const std::vector<double>& treated, const std::vector<double>& control);

// Same pooled form for binary indicators, using proportions with variance
// p(1-p).
double smd_binary(double p_treated, double p_control);

// Type-7 quantile (linear interpolation between order statistics).
double quantile_type7(std::vector<double> values, double p);

struct BalanceRow {
  std::string covariate;
  std::string level;  // empty for numeric covariates
  double treated_mean = 0.0;
  double control_mean_before = 0.0;  // all controls
  double smd_before = 0.0;
  double matched_control_mean = 0.0;
  double smd_after = 0.0;
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
  double max_smd_before() const;
  double max_smd_after() const;
};

// "Before" compares all treated against all controls; "after" compares
// treated against matched controls only. Nominal covariates expand to one
// proportion row per level. Covariates undefined for part of the corpus
// (rating_4, sentiment_4) are computed over the records that carry them.
BalanceTable balance_table(const Corpus& corpus, const TreatmentAssignment& assignment,
                           const MatchedPairs& pairs,
                           const std::vector<std::string>& covariates);

void write_balance_csv(const std::filesystem::path& path, const BalanceTable& table);

struct SimilarityGain {
  std::vector<double> before;  // random cross-group cosine sample
  std::vector<double> after;   // within-pair cosines
  double before_median = 0.0;
  double after_median = 0.0;
};

// "After" collects within-pair embedding cosines; "before" samples n_random
// random (treated, comparison) pairs. Units never appearing as a pair's
// treated side form the comparison reservoir.
SimilarityGain similarity_gain(const Corpus& corpus, const MatchedPairs& pairs,
                               int n_random, std::uint64_t seed);

struct GapSummary {
  std::string stratum;
  int pair_count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Within-pair ranking-gap summaries, one per stratum (type-7 quartiles).
std::vector<GapSummary> ranking_gap_summary(const MatchedPairs& pairs);

struct CptConfig {
  std::string classifier = "forest";  // "forest" or "logistic"
  ForestConfig forest;
  double logistic_ridge = 1e-2;
};

struct CptResult {
  double observed = 0.0;
  std::vector<double> permutation_stats;  // sorted ascending
  double p_value = 0.0;
  int B = 0;
  std::uint64_t seed = 0;
  std::string classifier;
};

// Classification permutation test on treated vs matched controls: the
// statistic is the classifier's accuracy (out-of-bag for the forest,
// training accuracy for the logistic fallback); permutations flip the two
// labels within each matched pair independently with probability 1/2, and
// p = (1 + #{perm >= observed}) / (B + 1). Requires B >= 19 and >= 10 pairs.
CptResult classification_permutation_test(const Corpus& corpus, const MatchedPairs& pairs,
                                          const std::vector<std::string>& covariates,
                                          const CptConfig& config, int B,
                                          std::uint64_t seed);

void write_cpt_csv(const std::filesystem::path& path, const CptResult& result);

}  // namespace pairflow
