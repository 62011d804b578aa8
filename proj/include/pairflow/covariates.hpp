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

#include <optional>
#include <string>
#include <vector>

#include "pairflow/corpus.hpp"

namespace pairflow {

enum class CovariateKind { Numeric, Nominal };

struct CovariateValue {
  CovariateKind kind;
  double number = 0.0;
  std::string label;
};

// Known names: year (nominal), rating_1..rating_4, sentiment_1..sentiment_4,
// num_authors, num_figures, num_references, num_sections, complexity,
// avg_institution_ranking (numeric), topic_cluster, primary_keyword (nominal).
bool is_known_covariate(const std::string& name);

// Throws ConfigError on unknown names.
CovariateKind covariate_kind(const std::string& name);

// nullopt when the covariate is undefined for this record (e.g. rating_4 on
// a three-reviewer record).
std::optional<CovariateValue> covariate_value(const SubmissionRecord& record,
                                              const std::string& name);

// The Table-1-style roster: year, per-reviewer ratings and sentiments,
// counts, complexity, topic cluster and primary keyword.
std::vector<std::string> default_covariate_roster();

// Filters a roster down to names defined on every given record (drops
// rating_4/sentiment_4 for pure three-reviewer sets).
std::vector<std::string> available_covariates(
    const std::vector<const SubmissionRecord*>& records,
    const std::vector<std::string>& roster);

}  // namespace pairflow
