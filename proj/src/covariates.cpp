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

#include "pairflow/covariates.hpp"

#include "pairflow/errors.hpp"

namespace pairflow {

namespace {

// -1 when `name` is not a slot covariate, otherwise 0-based slot.
int slot_of(const std::string& name, const std::string& prefix) {
  if (name.size() != prefix.size() + 1 || name.compare(0, prefix.size(), prefix) != 0) {
    return -1;
  }
  const char digit = name.back();
  if (digit < '1' || digit > '4') return -1;
  return digit - '1';
}

}  // namespace

bool is_known_covariate(const std::string& name) {
  if (slot_of(name, "rating_") >= 0 || slot_of(name, "sentiment_") >= 0) return true;
  return name == "year" || name == "num_authors" || name == "num_figures" ||
         name == "num_references" || name == "num_sections" || name == "complexity" ||
         name == "avg_institution_ranking" || name == "topic_cluster" ||
         name == "primary_keyword";
}

CovariateKind covariate_kind(const std::string& name) {
  if (!is_known_covariate(name)) {
    throw ConfigError("unknown covariate '" + name + "'");
  }
  if (name == "year" || name == "topic_cluster" || name == "primary_keyword") {
    return CovariateKind::Nominal;
  }
  return CovariateKind::Numeric;
}

std::optional<CovariateValue> covariate_value(const SubmissionRecord& r,
                                              const std::string& name) {
  const CovariateKind kind = covariate_kind(name);
  if (name == "year") return CovariateValue{kind, 0.0, std::to_string(r.year)};
  if (name == "topic_cluster") return CovariateValue{kind, 0.0, r.topic_cluster};
  if (name == "primary_keyword") return CovariateValue{kind, 0.0, r.primary_keyword};
  if (int slot = slot_of(name, "rating_"); slot >= 0) {
    if (slot >= r.reviewer_count()) return std::nullopt;
    return CovariateValue{kind, r.ratings[slot], {}};
  }
  if (int slot = slot_of(name, "sentiment_"); slot >= 0) {
    if (slot >= r.reviewer_count()) return std::nullopt;
    return CovariateValue{kind, r.sentiments[slot], {}};
  }
  if (name == "num_authors") return CovariateValue{kind, double(r.num_authors), {}};
  if (name == "num_figures") return CovariateValue{kind, double(r.num_figures), {}};
  if (name == "num_references") return CovariateValue{kind, double(r.num_references), {}};
  if (name == "num_sections") return CovariateValue{kind, double(r.num_sections), {}};
  if (name == "complexity") return CovariateValue{kind, r.complexity, {}};
  return CovariateValue{kind, r.avg_institution_ranking, {}};
}

std::vector<std::string> default_covariate_roster() {
  return {"year",        "rating_1",    "rating_2",      "rating_3",     "rating_4",
          "sentiment_1", "sentiment_2", "sentiment_3",   "sentiment_4",  "num_authors",
          "num_figures", "num_references", "num_sections", "complexity",
          "topic_cluster", "primary_keyword"};
}

std::vector<std::string> available_covariates(
    const std::vector<const SubmissionRecord*>& records,
    const std::vector<std::string>& roster) {
  std::vector<std::string> out;
  for (const auto& name : roster) {
    bool defined = true;
    for (const auto* record : records) {
      if (!covariate_value(*record, name).has_value()) {
        defined = false;
        break;
      }
    }
    if (defined) out.push_back(name);
  }
  return out;
}

}  // namespace pairflow
