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

#include "pairflow/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "pairflow/csv.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/rng.hpp"

namespace pairflow {

namespace {

std::string lower_trim(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
  }
  return out;
}

bool all_finite(const std::vector<double>& values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double SubmissionRecord::mean_rating() const {
  if (ratings.empty()) return 0.0;
  return std::accumulate(ratings.begin(), ratings.end(), 0.0) /
         static_cast<double>(ratings.size());
}

void sort_ratings_descending(SubmissionRecord& record) {
  const std::size_t n = record.ratings.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return record.ratings[a] > record.ratings[b];
  });
  std::vector<double> ratings(n), sentiments(n);
  for (std::size_t i = 0; i < n; ++i) {
    ratings[i] = record.ratings[order[i]];
    sentiments[i] = i < record.sentiments.size() ? record.sentiments[order[i]] : 0.0;
  }
  record.ratings = std::move(ratings);
  record.sentiments = std::move(sentiments);
}

void validate_record(const SubmissionRecord& r, int embedding_dim,
                     const std::string& context) {
  auto fail = [&](const std::string& msg) { throw ValidationError(context + ": " + msg); };
  if (r.id.empty()) fail("empty id");
  const std::size_t k = r.ratings.size();
  if (k != 3 && k != 4) fail("expected 3 or 4 ratings, got " + std::to_string(k));
  if (r.sentiments.size() != k) {
    fail("ratings/sentiments length mismatch (" + std::to_string(k) + " vs " +
         std::to_string(r.sentiments.size()) + ")");
  }
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (r.ratings[i] < r.ratings[i + 1]) fail("ratings not sorted descending");
  }
  for (double v : r.ratings) {
    if (!(v >= 1.0 && v <= 10.0)) fail("rating out of [1,10]");
  }
  for (double v : r.sentiments) {
    if (!(v >= 0.0 && v <= 1.0)) fail("sentiment out of [0,1]");
  }
  if (r.num_authors < 0 || r.num_figures < 0 || r.num_references < 0 ||
      r.num_sections < 0) {
    fail("negative count field");
  }
  if (!(r.complexity >= 0.0 && r.complexity <= 1.0)) fail("complexity out of [0,1]");
  if (!(r.avg_institution_ranking > 0.0) ||
      !std::isfinite(r.avg_institution_ranking)) {
    fail("avg_institution_ranking must be positive");
  }
  if (static_cast<int>(r.embedding.size()) != embedding_dim) {
    fail("embedding dimension mismatch: expected " + std::to_string(embedding_dim) +
         ", got " + std::to_string(r.embedding.size()));
  }
  if (!all_finite(r.ratings) || !all_finite(r.sentiments) || !all_finite(r.embedding) ||
      !std::isfinite(r.complexity)) {
    fail("non-finite numeric field");
  }
  if (r.outcome != 0 && r.outcome != 1) fail("outcome must be 0 or 1");
}

std::unordered_map<std::string, std::size_t> Corpus::id_index() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index.emplace(records[i].id, i);
    if (!inserted) {
      throw ValidationError("duplicate id '" + records[i].id + "' at rows " +
                            std::to_string(it->second) + " and " + std::to_string(i));
    }
  }
  return index;
}

void validate_corpus(const Corpus& corpus) {
  corpus.id_index();  // throws on duplicates
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    validate_record(corpus.records[i], corpus.embedding_dim,
                    "row " + std::to_string(i));
  }
}

DecisionCodes DecisionCodes::defaults() {
  return DecisionCodes{
      {"accept", "oral", "spotlight", "poster", "short talk", "talk"},
      {"reject", "invited to workshop track", "workshop"},
  };
}

int dichotomize_decision(const std::string& raw, const DecisionCodes& codes) {
  const std::string key = lower_trim(raw);
  for (const auto& label : codes.accept) {
    if (key == lower_trim(label)) return 1;
  }
  for (const auto& label : codes.reject) {
    if (key == lower_trim(label)) return 0;
  }
  std::string known;
  for (const auto& label : codes.accept) known += "'" + label + "' ";
  for (const auto& label : codes.reject) known += "'" + label + "' ";
  throw ValidationError("unrecognized decision label '" + raw + "'; known labels: " + known);
}

std::string decision_string(int outcome) { return outcome == 1 ? "accept" : "reject"; }

Corpus load_corpus(const std::filesystem::path& path, const CsvSchema& schema,
                   const DecisionCodes& codes) {
  const CsvTable table = read_csv(path, schema.delimiter);
  const int col_id = table.require_column(schema.id);
  const int col_year = table.require_column(schema.year);
  int col_rating[4];
  int col_sentiment[4];
  for (int j = 0; j < 4; ++j) {
    col_rating[j] = table.require_column(schema.rating_prefix + std::to_string(j + 1));
    col_sentiment[j] =
        table.require_column(schema.sentiment_prefix + std::to_string(j + 1));
  }
  const int col_authors = table.require_column(schema.num_authors);
  const int col_figures = table.require_column(schema.num_figures);
  const int col_references = table.require_column(schema.num_references);
  const int col_sections = table.require_column(schema.num_sections);
  const int col_complexity = table.require_column(schema.complexity);
  const int col_topic = table.require_column(schema.topic_cluster);
  const int col_keyword = table.require_column(schema.primary_keyword);
  const int col_ranking = table.require_column(schema.avg_institution_ranking);
  const int col_decision = table.require_column(schema.decision_raw);

  std::vector<int> emb_cols;
  for (int d = 0;; ++d) {
    int col = table.column(schema.embedding_prefix + std::to_string(d));
    if (col < 0) break;
    emb_cols.push_back(col);
  }
  if (emb_cols.empty()) {
    throw ValidationError("missing column '" + schema.embedding_prefix + "0'");
  }

  Corpus corpus;
  corpus.embedding_dim = static_cast<int>(emb_cols.size());
  corpus.provenance = path.string();
  corpus.records.reserve(table.rows.size());

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string context = "row " + std::to_string(i);
    SubmissionRecord r;
    r.id = row[col_id];
    r.year = static_cast<int>(parse_int(row[col_year], context));
    for (int j = 0; j < 4; ++j) {
      const std::string& rating = row[col_rating[j]];
      const std::string& sentiment = row[col_sentiment[j]];
      if (rating.empty() != sentiment.empty()) {
        throw ValidationError(context + ": rating/sentiment slot " +
                              std::to_string(j + 1) + " half-empty");
      }
      if (rating.empty()) continue;
      r.ratings.push_back(parse_double(rating, context));
      r.sentiments.push_back(parse_double(sentiment, context));
    }
    r.num_authors = static_cast<int>(parse_int(row[col_authors], context));
    r.num_figures = static_cast<int>(parse_int(row[col_figures], context));
    r.num_references = static_cast<int>(parse_int(row[col_references], context));
    r.num_sections = static_cast<int>(parse_int(row[col_sections], context));
    r.complexity = parse_double(row[col_complexity], context);
    r.topic_cluster = row[col_topic];
    r.primary_keyword = row[col_keyword];
    r.avg_institution_ranking = parse_double(row[col_ranking], context);
    try {
      r.outcome = dichotomize_decision(row[col_decision], codes);
    } catch (const ValidationError& e) {
      throw ValidationError(context + ": " + e.what());
    }
    r.embedding.reserve(emb_cols.size());
    for (int col : emb_cols) r.embedding.push_back(parse_double(row[col], context));
    sort_ratings_descending(r);
    validate_record(r, corpus.embedding_dim, context);
    corpus.records.push_back(std::move(r));
  }
  corpus.id_index();  // duplicate check
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus,
                 const CsvSchema& schema) {
  CsvTable table;
  table.header = {schema.id, schema.year};
  for (int j = 1; j <= 4; ++j) table.header.push_back(schema.rating_prefix + std::to_string(j));
  for (int j = 1; j <= 4; ++j)
    table.header.push_back(schema.sentiment_prefix + std::to_string(j));
  table.header.insert(table.header.end(),
                      {schema.num_authors, schema.num_figures, schema.num_references,
                       schema.num_sections, schema.complexity, schema.topic_cluster,
                       schema.primary_keyword, schema.avg_institution_ranking,
                       schema.decision_raw});
  for (int d = 0; d < corpus.embedding_dim; ++d) {
    table.header.push_back(schema.embedding_prefix + std::to_string(d));
  }
  for (const auto& r : corpus.records) {
    std::vector<std::string> row;
    row.reserve(table.header.size());
    row.push_back(r.id);
    row.push_back(std::to_string(r.year));
    for (int j = 0; j < 4; ++j) {
      row.push_back(j < r.reviewer_count() ? format_double(r.ratings[j]) : "");
    }
    for (int j = 0; j < 4; ++j) {
      row.push_back(j < r.reviewer_count() ? format_double(r.sentiments[j]) : "");
    }
    row.push_back(std::to_string(r.num_authors));
    row.push_back(std::to_string(r.num_figures));
    row.push_back(std::to_string(r.num_references));
    row.push_back(std::to_string(r.num_sections));
    row.push_back(format_double(r.complexity));
    row.push_back(r.topic_cluster);
    row.push_back(r.primary_keyword);
    row.push_back(format_double(r.avg_institution_ranking));
    row.push_back(decision_string(r.outcome));
    for (double v : r.embedding) row.push_back(format_double(v));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table, schema.delimiter);
}

Corpus filter_borderline(const Corpus& corpus, double min_avg, double max_avg,
                         const std::set<int>& reviewer_counts) {
  if (min_avg > max_avg) throw ConfigError("filter_borderline: min_avg > max_avg");
  Corpus out;
  out.embedding_dim = corpus.embedding_dim;
  out.provenance = corpus.provenance;
  for (const auto& r : corpus.records) {
    const double mean = r.mean_rating();
    if (mean >= min_avg && mean <= max_avg &&
        reviewer_counts.count(r.reviewer_count()) > 0) {
      out.records.push_back(r);
    }
  }
  return out;
}

bool TreatmentAssignment::is_treated(const std::string& id) const {
  return std::binary_search(treated_ids.begin(), treated_ids.end(), id);
}

TreatmentAssignment assign_treatment(const Corpus& corpus, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw ConfigError("assign_treatment: quantile must lie in (0,1)");
  }
  if (corpus.records.empty()) {
    throw ValidationError("assign_treatment: empty corpus");
  }
  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = corpus.records[a];
    const auto& rb = corpus.records[b];
    if (ra.avg_institution_ranking != rb.avg_institution_ranking) {
      return ra.avg_institution_ranking < rb.avg_institution_ranking;
    }
    return ra.id < rb.id;
  });

  std::size_t target = static_cast<std::size_t>(
      std::floor(quantile * static_cast<double>(n)));
  std::size_t cut = target;
  if (cut > 0 && cut < n) {
    const double boundary =
        corpus.records[order[cut - 1]].avg_institution_ranking;
    if (corpus.records[order[cut]].avg_institution_ranking == boundary) {
      // The tied block straddles the cut; drop it entirely.
      while (cut > 0 &&
             corpus.records[order[cut - 1]].avg_institution_ranking == boundary) {
        --cut;
      }
    }
  }

  TreatmentAssignment assignment;
  assignment.quantile = quantile;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = corpus.records[order[i]];
    (i < cut ? assignment.treated_ids : assignment.control_ids).push_back(r.id);
  }
  std::sort(assignment.treated_ids.begin(), assignment.treated_ids.end());
  std::sort(assignment.control_ids.begin(), assignment.control_ids.end());
  assignment.threshold_rank =
      cut > 0 ? corpus.records[order[cut - 1]].avg_institution_ranking
              : std::numeric_limits<double>::lowest();
  return assignment;
}

InstitutionHistory InstitutionHistory::from_events(std::vector<Event> events) {
  InstitutionHistory history;
  history.accept_events = std::move(events);
  if (!history.accept_events.empty()) {
    history.min_year = history.max_year = history.accept_events.front().year;
    for (const auto& event : history.accept_events) {
      history.min_year = std::min(history.min_year, event.year);
      history.max_year = std::max(history.max_year, event.year);
    }
  }
  return history;
}

std::map<std::string, int> compute_institution_ranking(const InstitutionHistory& history,
                                                       int as_of_year) {
  if (history.accept_events.empty()) {
    throw ValidationError("compute_institution_ranking: empty history");
  }
  if (as_of_year < history.min_year || as_of_year > history.max_year) {
    throw ConfigError("compute_institution_ranking: as_of_year " +
                      std::to_string(as_of_year) + " outside declared range [" +
                      std::to_string(history.min_year) + ", " +
                      std::to_string(history.max_year) + "]");
  }
  std::map<std::string, long long> counts;
  for (const auto& event : history.accept_events) counts[event.institution] = 0;
  for (const auto& event : history.accept_events) {
    if (event.year <= as_of_year) ++counts[event.institution];
  }
  const int worst = static_cast<int>(counts.size());

  std::vector<std::pair<std::string, long long>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::map<std::string, int> ranks;
  int block_rank = 1;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i > 0 && ordered[i].second != ordered[i - 1].second) {
      block_rank = static_cast<int>(i) + 1;
    }
    ranks[ordered[i].first] =
        ordered[i].second == 0 ? worst : block_rank;
  }
  return ranks;
}

double jaccard_similarity(const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t intersection = 0;
  for (const auto& item : sa) intersection += sb.count(item);
  const std::size_t unions = sa.size() + sb.size() - intersection;
  return static_cast<double>(intersection) / static_cast<double>(unions);
}

double normalized_levenshtein(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 1.0;
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1), curr(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t substitution = prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, substitution});
    }
    std::swap(prev, curr);
  }
  const double distance = static_cast<double>(prev[m]);
  return 1.0 - distance / static_cast<double>(std::max(n, m));
}

void SyntheticParams::validate() const {
  if (embedding_dim < 2) throw ConfigError("synthetic: embedding_dim must be >= 2");
  if (num_topics < 1) throw ConfigError("synthetic: num_topics must be >= 1");
  if (num_keywords < 1) throw ConfigError("synthetic: num_keywords must be >= 1");
  if (year_min > year_max) throw ConfigError("synthetic: year_min > year_max");
  if (four_reviewer_frac < 0.0 || four_reviewer_frac > 1.0) {
    throw ConfigError("synthetic: four_reviewer_frac must lie in [0,1]");
  }
  if (!(treatment_quantile > 0.0 && treatment_quantile < 1.0)) {
    throw ConfigError("synthetic: treatment_quantile must lie in (0,1)");
  }
  if (covariate_noise < 0.0 || ranking_noise < 0.0 || sentiment_noise < 0.0 ||
      rating_noise < 0.0 || embedding_noise < 0.0) {
    throw ConfigError("synthetic: noise scales must be non-negative");
  }
  if (confounding < 0.0) throw ConfigError("synthetic: confounding must be >= 0");
  if (confounding + covariate_noise <= 0.0) {
    throw ConfigError("synthetic: confounding and covariate_noise cannot both be 0");
  }
}

Corpus generate_synthetic_corpus(std::uint64_t seed, int n, const SyntheticParams& p) {
  p.validate();
  if (n < 2) throw ConfigError("synthetic: n must be >= 2");

  const Rng root(seed);

  // Topic centroids shared by all units.
  Rng centroid_rng = root.stream("centroids");
  std::vector<std::vector<double>> centroids(p.num_topics,
                                             std::vector<double>(p.embedding_dim));
  for (auto& c : centroids) {
    for (double& v : c) v = centroid_rng.normal();
  }

  Corpus corpus;
  corpus.embedding_dim = p.embedding_dim;
  corpus.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
  corpus.records.reserve(n);

  std::vector<double> prestige(n);
  std::vector<double> quality(n);

  const int num_years = p.year_max - p.year_min + 1;
  const int id_width = static_cast<int>(std::to_string(n - 1).size());

  for (int i = 0; i < n; ++i) {
    Rng rng = root.stream("unit", static_cast<std::uint64_t>(i));
    SubmissionRecord r;
    {
      std::string num = std::to_string(i);
      r.id = "p" + std::string(id_width - num.size(), '0') + num;
    }

    const double s = rng.normal();  // latent prestige
    const double rho = p.confounding / std::sqrt(1.0 + p.confounding * p.confounding);
    const double u = rho * s + std::sqrt(1.0 - rho * rho) * rng.normal();
    prestige[i] = s;
    quality[i] = u;

    // Year mildly tilted by prestige (high-prestige units skew early).
    {
      std::vector<double> weights(num_years);
      for (int y = 0; y < num_years; ++y) {
        const double center = (num_years - 1) / 2.0;
        weights[y] = std::exp(-0.25 * s * (y - center) / std::max(1.0, center));
      }
      r.year = p.year_min + rng.categorical(weights);
    }

    const int reviewers = rng.bernoulli(p.four_reviewer_frac) ? 4 : 3;
    for (int j = 0; j < reviewers; ++j) {
      double raw = 6.0 + p.rating_scale * u + p.rating_noise * rng.normal();
      double rounded = std::round(raw);
      r.ratings.push_back(std::clamp(rounded, 1.0, 10.0));
    }
    for (double rating : r.ratings) {
      double sent = 0.5 + 0.10 * (rating - 6.0) + p.sentiment_noise * rng.normal();
      r.sentiments.push_back(std::clamp(sent, 0.0, 1.0));
    }
    sort_ratings_descending(r);

    const double tilt = p.confounding;
    // Unit-variance mix: quality (balanced through rating matching), prestige
    // (the planted confounder) and idiosyncratic noise.
    const double mix_norm =
        std::sqrt(1.0 + tilt * tilt + p.covariate_noise * p.covariate_noise);
    auto mixed = [&] {
      return (u + tilt * s + p.covariate_noise * rng.normal()) / mix_norm;
    };
    auto count = [&](double base, double scale) {
      return static_cast<int>(
          std::max(0.0, std::round(base + scale * mixed())));
    };
    r.num_authors = std::max(1, count(4.0, 1.5));
    r.num_figures = count(12.0, 4.0);
    r.num_references = count(40.0, 10.0);
    r.num_sections = count(20.0, 5.0);
    r.complexity = std::clamp(0.84 + 0.02 * mixed(), 0.0, 1.0);

    {
      std::vector<double> weights(p.num_topics);
      for (int t = 0; t < p.num_topics; ++t) {
        const double slope = (t % 2 == 0 ? 1.0 : -1.0) * (0.15 + 0.05 * (t % 3));
        weights[t] = std::exp(tilt * slope * s);
      }
      const int topic = rng.categorical(weights);
      r.topic_cluster = "t" + std::to_string(topic);
      r.embedding.resize(p.embedding_dim);
      for (int d = 0; d < p.embedding_dim; ++d) {
        r.embedding[d] = centroids[topic][d] + p.embedding_noise * rng.normal();
      }
    }
    {
      std::vector<double> weights(p.num_keywords);
      for (int k = 0; k < p.num_keywords; ++k) {
        const double slope = (k % 2 == 0 ? -1.0 : 1.0) * (0.10 + 0.04 * (k % 4));
        weights[k] = std::exp(tilt * slope * s) * (k == 0 ? 1.5 : 1.0);
      }
      const int keyword = rng.categorical(weights);
      r.primary_keyword = keyword == 0 ? "NA" : "kw" + std::to_string(keyword);
    }

    const double ranking_index = s + p.ranking_noise * rng.normal();
    r.avg_institution_ranking = 1.0 + 399.0 * normal_cdf(-ranking_index);

    corpus.records.push_back(std::move(r));
  }

  // Top-quantile cut on the generated rankings defines who receives the
  // planted treatment effect.
  std::vector<double> rankings;
  rankings.reserve(n);
  for (const auto& r : corpus.records) rankings.push_back(r.avg_institution_ranking);
  std::vector<double> sorted = rankings;
  std::sort(sorted.begin(), sorted.end());
  const int cut_index = std::max(
      0, static_cast<int>(std::floor(p.treatment_quantile * n)) - 1);
  const double cut_value = sorted[cut_index];

  for (int i = 0; i < n; ++i) {
    Rng rng = root.stream("outcome", static_cast<std::uint64_t>(i));
    auto& r = corpus.records[i];
    const bool planted_treated = r.avg_institution_ranking <= cut_value;
    const double logit = p.outcome_intercept + p.outcome_quality * quality[i] +
                         p.outcome_rating * (r.mean_rating() - 6.0) +
                         (planted_treated ? p.treatment_effect : 0.0);
    const double prob = 1.0 / (1.0 + std::exp(-logit));
    r.outcome = rng.bernoulli(prob) ? 1 : 0;
  }

  validate_corpus(corpus);
  return corpus;
}

}  // namespace pairflow
