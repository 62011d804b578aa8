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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace pairflow {

// One study unit: a peer-reviewed submission with its reviewer ratings,
// text-derived features, institution ranking and final binary decision.
struct SubmissionRecord {
  std::string id;
  int year = 0;
  // Sorted non-increasing, length 3 or 4, each in [1, 10]. "Reviewer I" is
  // ratings[0] (the maximum), matching how order statistics are compared.
  std::vector<double> ratings;
  // Same length as ratings and permuted in lockstep with them.
  std::vector<double> sentiments;
  int num_authors = 0;
  int num_figures = 0;
  int num_references = 0;
  int num_sections = 0;
  double complexity = 0.0;  // in [0, 1]
  std::string topic_cluster;
  std::string primary_keyword;  // the level "NA" is a valid value
  double avg_institution_ranking = 0.0;  // positive; lower = higher prestige
  std::vector<double> embedding;
  int outcome = 0;  // 1 = accept, 0 = reject

  int reviewer_count() const { return static_cast<int>(ratings.size()); }
  double mean_rating() const;
};

// Sorts ratings descending and permutes sentiments identically.
void sort_ratings_descending(SubmissionRecord& record);

// Throws ValidationError when a record violates the data model; `context`
// is prefixed to the message (typically "row N").
void validate_record(const SubmissionRecord& record, int embedding_dim,
                     const std::string& context);

struct Corpus {
  std::vector<SubmissionRecord> records;
  int embedding_dim = 0;
  std::string provenance;

  std::size_t size() const { return records.size(); }
  // id -> index; throws ValidationError on duplicate ids.
  std::unordered_map<std::string, std::size_t> id_index() const;
};

void validate_corpus(const Corpus& corpus);

// Maps raw decision strings onto the binary outcome.
struct DecisionCodes {
  std::vector<std::string> accept;
  std::vector<std::string> reject;
  static DecisionCodes defaults();
};

// Case-insensitive; throws ValidationError on unrecognized labels, listing
// the known ones.
int dichotomize_decision(const std::string& raw,
                         const DecisionCodes& codes = DecisionCodes::defaults());

// Renders outcome back to a canonical raw decision string for export.
std::string decision_string(int outcome);

// Column-name remapping for ingestion; defaults to the canonical header.
struct CsvSchema {
  std::string id = "id";
  std::string year = "year";
  std::string rating_prefix = "rating_";        // rating_1..rating_4
  std::string sentiment_prefix = "sentiment_";  // sentiment_1..sentiment_4
  std::string num_authors = "num_authors";
  std::string num_figures = "num_figures";
  std::string num_references = "num_references";
  std::string num_sections = "num_sections";
  std::string complexity = "complexity";
  std::string topic_cluster = "topic_cluster";
  std::string primary_keyword = "primary_keyword";
  std::string avg_institution_ranking = "avg_institution_ranking";
  std::string decision_raw = "decision_raw";
  std::string embedding_prefix = "emb_";  // emb_0..emb_{d-1}
  char delimiter = ',';
};

// Reads a delimiter-separated corpus file. Every row is validated; ratings
// are re-sorted descending with sentiments permuted in lockstep. Errors name
// the offending row.
Corpus load_corpus(const std::filesystem::path& path, const CsvSchema& schema = {},
                   const DecisionCodes& codes = DecisionCodes::defaults());

void save_corpus(const std::filesystem::path& path, const Corpus& corpus,
                 const CsvSchema& schema = {});

// Keeps records whose mean rating lies in [min_avg, max_avg] (inclusive)
// and whose reviewer count is in `reviewer_counts`.
Corpus filter_borderline(const Corpus& corpus, double min_avg, double max_avg,
                         const std::set<int>& reviewer_counts = {3, 4});

struct TreatmentAssignment {
  std::vector<std::string> treated_ids;  // sorted
  std::vector<std::string> control_ids;  // sorted
  double quantile = 0.0;
  // Max treated ranking actually used as the cut; every control ranking is
  // strictly larger. Lowest representable value when nothing is treated.
  double threshold_rank = 0.0;

  bool is_treated(const std::string& id) const;
};

// Treated = records whose avg_institution_ranking falls in the best (lowest)
// q-quantile. Target size floor(q*n); a ranking block tied across the cut is
// excluded entirely so treatment is a deterministic function of the ranking.
TreatmentAssignment assign_treatment(const Corpus& corpus, double quantile);

struct InstitutionHistory {
  struct Event {
    std::string institution;
    int year = 0;
  };
  std::vector<Event> accept_events;
  int min_year = 0;
  int max_year = 0;

  static InstitutionHistory from_events(std::vector<Event> events);
};

// Competition ranking by cumulative accepted papers in years <= as_of_year:
// rank 1 = most accepts, ties share the best rank of their block, and
// institutions with zero accepts all get the worst rank (the institution
// count).
std::map<std::string, int> compute_institution_ranking(const InstitutionHistory& history,
                                                       int as_of_year);

// |a ∩ b| / |a ∪ b|; both empty -> 1. Inputs are treated as sets.
double jaccard_similarity(const std::vector<std::string>& a,
                          const std::vector<std::string>& b);

// 1 - editdistance(a, b) / max(|a|, |b|); both empty -> 1.
double normalized_levenshtein(const std::string& a, const std::string& b);

// Knobs for the synthetic corpus generator. A single latent prestige index
// drives the institution ranking and, through `confounding`, the covariates;
// the outcome follows a logistic model of quality and ratings with an
// optional treatment effect for units ranked in the top quantile.
struct SyntheticParams {
  int embedding_dim = 16;
  int num_topics = 6;
  int num_keywords = 8;  // keyword 0 is rendered as "NA"
  int year_min = 2017;
  int year_max = 2022;
  double four_reviewer_frac = 0.4;
  double confounding = 1.0;      // prestige loading of every covariate
  double covariate_noise = 1.0;  // idiosyncratic loading; noise fraction is
                                 // covariate_noise^2 / (confounding^2 + covariate_noise^2)
  double ranking_noise = 0.6;    // noise between prestige and ranking
  double rating_scale = 0.9;     // quality -> rating slope
  double rating_noise = 0.9;     // per-reviewer rating noise
  double embedding_noise = 0.35;  // spread around the topic centroid
  double sentiment_noise = 0.04;
  double treatment_quantile = 0.3;
  double treatment_effect = 0.0;  // log-odds shift for top-quantile units
  double outcome_intercept = 0.0;
  double outcome_quality = 1.0;  // latent quality -> outcome log-odds
  double outcome_rating = 0.8;   // centered mean rating -> outcome log-odds

  void validate() const;  // throws ConfigError on bad knob ranges
};

// Deterministic for a fixed seed; n >= 2.
Corpus generate_synthetic_corpus(std::uint64_t seed, int n,
                                 const SyntheticParams& params = {});

}  // namespace pairflow
