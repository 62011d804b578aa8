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

#include "pairflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "pairflow/covariates.hpp"
#include "pairflow/csv.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/features.hpp"
#include "pairflow/propensity.hpp"
#include "pairflow/rng.hpp"

namespace pairflow {

namespace {

double mean_of(const std::vector<double>& values) {
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double sample_variance(const std::vector<double>& values, double mean) {
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

}  // namespace

double smd(const std::vector<double>& treated, const std::vector<double>& control) {
  if (treated.size() < 2 || control.size() < 2) {
    throw ValidationError("smd: each sample needs at least 2 values");
  }
  const double mt = mean_of(treated);
  const double mc = mean_of(control);
  const double pooled = (sample_variance(treated, mt) + sample_variance(control, mc)) / 2.0;
  const double diff = std::abs(mt - mc);
  if (pooled == 0.0) {
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return diff / std::sqrt(pooled);
}

double smd_binary(double p_treated, double p_control) {
  const double pooled =
      (p_treated * (1.0 - p_treated) + p_control * (1.0 - p_control)) / 2.0;
  const double diff = std::abs(p_treated - p_control);
  if (pooled == 0.0) {
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return diff / std::sqrt(pooled);
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  if (p < 0.0 || p > 1.0) throw ConfigError("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double BalanceTable::max_smd_before() const {
  double best = 0.0;
  for (const auto& row : rows) best = std::max(best, row.smd_before);
  return best;
}

double BalanceTable::max_smd_after() const {
  double best = 0.0;
  for (const auto& row : rows) best = std::max(best, row.smd_after);
  return best;
}

BalanceTable balance_table(const Corpus& corpus, const TreatmentAssignment& assignment,
                           const MatchedPairs& pairs,
                           const std::vector<std::string>& covariates) {
  if (pairs.pairs.empty()) throw ValidationError("balance_table: empty pair set");
  const auto index = corpus.id_index();

  std::vector<const SubmissionRecord*> treated, controls, matched;
  for (const auto& id : assignment.treated_ids) {
    if (auto it = index.find(id); it != index.end()) {
      treated.push_back(&corpus.records[it->second]);
    }
  }
  for (const auto& id : assignment.control_ids) {
    if (auto it = index.find(id); it != index.end()) {
      controls.push_back(&corpus.records[it->second]);
    }
  }
  for (const auto& pair : pairs.pairs) {
    const auto it = index.find(pair.control_id);
    if (it == index.end()) {
      throw ValidationError("balance_table: pair control '" + pair.control_id +
                            "' not in corpus");
    }
    matched.push_back(&corpus.records[it->second]);
  }

  BalanceTable table;
  for (const auto& name : covariates) {
    const CovariateKind kind = covariate_kind(name);
    if (kind == CovariateKind::Numeric) {
      auto collect = [&](const std::vector<const SubmissionRecord*>& group) {
        std::vector<double> values;
        for (const auto* r : group) {
          if (auto v = covariate_value(*r, name)) values.push_back(v->number);
        }
        return values;
      };
      const auto vt = collect(treated);
      const auto vc = collect(controls);
      const auto vm = collect(matched);
      if (vt.empty() && vc.empty() && vm.empty()) continue;  // undefined everywhere
      BalanceRow row;
      row.covariate = name;
      row.treated_mean = mean_of(vt);
      row.control_mean_before = mean_of(vc);
      row.smd_before = smd(vt, vc);
      row.matched_control_mean = mean_of(vm);
      row.smd_after = smd(vt, vm);
      table.rows.push_back(row);
    } else {
      std::set<std::string> levels;
      for (const auto& r : corpus.records) {
        if (auto v = covariate_value(r, name)) levels.insert(v->label);
      }
      auto proportion = [&](const std::vector<const SubmissionRecord*>& group,
                            const std::string& level) {
        long long hits = 0, defined = 0;
        for (const auto* r : group) {
          if (auto v = covariate_value(*r, name)) {
            ++defined;
            hits += v->label == level ? 1 : 0;
          }
        }
        return defined > 0 ? static_cast<double>(hits) / static_cast<double>(defined)
                           : 0.0;
      };
      for (const auto& level : levels) {
        BalanceRow row;
        row.covariate = name;
        row.level = level;
        row.treated_mean = proportion(treated, level);
        row.control_mean_before = proportion(controls, level);
        row.smd_before = smd_binary(row.treated_mean, row.control_mean_before);
        row.matched_control_mean = proportion(matched, level);
        row.smd_after = smd_binary(row.treated_mean, row.matched_control_mean);
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

void write_balance_csv(const std::filesystem::path& path, const BalanceTable& table) {
  CsvTable csv;
  csv.header = {"covariate",         "level",       "treated_mean", "control_mean_before",
                "smd_before",        "matched_control_mean", "smd_after"};
  for (const auto& row : table.rows) {
    csv.rows.push_back({row.covariate, row.level, format_double(row.treated_mean),
                        format_double(row.control_mean_before),
                        format_double(row.smd_before),
                        format_double(row.matched_control_mean),
                        format_double(row.smd_after)});
  }
  write_csv(path, csv);
}

SimilarityGain similarity_gain(const Corpus& corpus, const MatchedPairs& pairs,
                               int n_random, std::uint64_t seed) {
  if (n_random < 1) throw ConfigError("similarity_gain: n_random must be >= 1");
  const auto index = corpus.id_index();
  SimilarityGain gain;

  std::set<std::string> treated_ids;
  for (const auto& pair : pairs.pairs) {
    const auto it_t = index.find(pair.treated_id);
    const auto it_c = index.find(pair.control_id);
    if (it_t == index.end() || it_c == index.end()) {
      throw ValidationError("similarity_gain: pair id missing from corpus");
    }
    gain.after.push_back(cosine_similarity(corpus.records[it_t->second].embedding,
                                           corpus.records[it_c->second].embedding));
    treated_ids.insert(pair.treated_id);
  }

  std::vector<std::size_t> treated_rows, reservoir_rows;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (treated_ids.count(corpus.records[i].id)) {
      treated_rows.push_back(i);
    } else {
      reservoir_rows.push_back(i);
    }
  }
  if (treated_rows.empty() || reservoir_rows.empty()) {
    throw ValidationError("similarity_gain: need both treated and comparison units");
  }

  Rng rng = Rng(seed).stream("similarity");
  for (int draw = 0; draw < n_random; ++draw) {
    const std::size_t a =
        treated_rows[rng.uniform_int(0, static_cast<int>(treated_rows.size()) - 1)];
    const std::size_t b =
        reservoir_rows[rng.uniform_int(0, static_cast<int>(reservoir_rows.size()) - 1)];
    gain.before.push_back(
        cosine_similarity(corpus.records[a].embedding, corpus.records[b].embedding));
  }
  gain.before_median = quantile_type7(gain.before, 0.5);
  gain.after_median = quantile_type7(gain.after, 0.5);
  return gain;
}

std::vector<GapSummary> ranking_gap_summary(const MatchedPairs& pairs) {
  if (pairs.pairs.empty()) throw ValidationError("ranking_gap_summary: empty input");
  std::map<std::string, std::vector<double>> by_stratum;
  for (const auto& pair : pairs.pairs) by_stratum[pair.stratum].push_back(pair.rank_gap);

  std::vector<GapSummary> out;
  for (const auto& [stratum, gaps] : by_stratum) {
    GapSummary summary;
    summary.stratum = stratum;
    summary.pair_count = static_cast<int>(gaps.size());
    summary.mean = mean_of(gaps);
    summary.median = quantile_type7(gaps, 0.5);
    summary.q1 = quantile_type7(gaps, 0.25);
    summary.q3 = quantile_type7(gaps, 0.75);
    out.push_back(std::move(summary));
  }
  return out;
}

namespace {

// One-hot encoding for tree features: every nominal level keeps a column and
// numeric columns stay raw.
Eigen::MatrixXd encode_forest_features(const std::vector<const SubmissionRecord*>& records,
                                       const std::vector<std::string>& covariates) {
  std::vector<std::pair<std::string, std::string>> columns;  // (covariate, level-or-empty)
  for (const auto& name : covariates) {
    if (covariate_kind(name) == CovariateKind::Nominal) {
      std::set<std::string> levels;
      for (const auto* r : records) {
        auto value = covariate_value(*r, name);
        if (!value) {
          throw ValidationError("cpt: covariate '" + name + "' undefined for record '" +
                                r->id + "'");
        }
        levels.insert(value->label);
      }
      for (const auto& level : levels) columns.emplace_back(name, level);
    } else {
      columns.emplace_back(name, "");
    }
  }
  Eigen::MatrixXd X(records.size(), columns.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto value = covariate_value(*records[i], columns[j].first);
      if (!value) {
        throw ValidationError("cpt: covariate '" + columns[j].first +
                              "' undefined for record '" + records[i]->id + "'");
      }
      X(i, j) = columns[j].second.empty()
                    ? value->number
                    : (value->label == columns[j].second ? 1.0 : 0.0);
    }
  }
  return X;
}

double logistic_training_accuracy(const Eigen::MatrixXd& X, const std::vector<int>& y,
                                  double ridge) {
  DesignMatrix design;
  design.X = Eigen::MatrixXd::Ones(X.rows(), X.cols() + 1);
  design.X.rightCols(X.cols()) = X;
  design.columns.assign(static_cast<std::size_t>(X.cols()) + 1, ColumnDescriptor{});
  Eigen::VectorXd beta;
  try {
    beta = fit_logistic(design, y, ridge, 1e-6, 200).beta;
  } catch (const NonConvergenceError& e) {
    beta = Eigen::Map<const Eigen::VectorXd>(e.last_beta.data(), e.last_beta.size());
  }
  const Eigen::VectorXd eta = design.X * beta;
  double credit = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta(i) == 0.0) {
      credit += 0.5;
    } else {
      credit += ((eta(i) > 0.0) == (y[i] == 1)) ? 1.0 : 0.0;
    }
  }
  return credit / static_cast<double>(eta.size());
}

}  // namespace

CptResult classification_permutation_test(const Corpus& corpus, const MatchedPairs& pairs,
                                          const std::vector<std::string>& covariates,
                                          const CptConfig& config, int B,
                                          std::uint64_t seed) {
  if (B < 19) throw ConfigError("cpt: B must be >= 19");
  if (pairs.pairs.size() < 10) {
    throw ValidationError("cpt: need at least 10 matched pairs");
  }
  if (config.classifier != "forest" && config.classifier != "logistic") {
    throw ConfigError("cpt: unknown classifier '" + config.classifier + "'");
  }

  const auto index = corpus.id_index();
  std::vector<const SubmissionRecord*> records;
  records.reserve(2 * pairs.pairs.size());
  for (const auto& pair : pairs.pairs) {
    const auto it_t = index.find(pair.treated_id);
    const auto it_c = index.find(pair.control_id);
    if (it_t == index.end() || it_c == index.end()) {
      throw ValidationError("cpt: pair id missing from corpus");
    }
    records.push_back(&corpus.records[it_t->second]);
    records.push_back(&corpus.records[it_c->second]);
  }

  const Eigen::MatrixXd X = encode_forest_features(records, covariates);
  const int n = static_cast<int>(records.size());
  const int num_pairs = n / 2;

  const Rng root(seed);
  // The statistic must be the same deterministic function of the labels for
  // the observed data and every permutation, so the classifier seed is fixed.
  const std::uint64_t stat_seed = root.stream("classifier").seed();

  auto statistic = [&](const std::vector<int>& labels) {
    if (config.classifier == "forest") {
      return forest_oob_accuracy(X, labels, config.forest, stat_seed);
    }
    return logistic_training_accuracy(X, labels, config.logistic_ridge);
  };

  std::vector<int> base_labels(n);
  for (int i = 0; i < n; ++i) base_labels[i] = (i % 2 == 0) ? 1 : 0;

  CptResult result;
  result.B = B;
  result.seed = seed;
  result.classifier = config.classifier;
  result.observed = statistic(base_labels);

  result.permutation_stats.reserve(B);
  std::vector<int> labels(n);
  for (int b = 0; b < B; ++b) {
    Rng rng = root.stream("perm", static_cast<std::uint64_t>(b));
    labels = base_labels;
    for (int pair = 0; pair < num_pairs; ++pair) {
      if (rng.bernoulli(0.5)) {
        std::swap(labels[2 * pair], labels[2 * pair + 1]);
      }
    }
    result.permutation_stats.push_back(statistic(labels));
  }

  long long geq = 0;
  for (double stat : result.permutation_stats) {
    if (stat >= result.observed) ++geq;
  }
  result.p_value = static_cast<double>(1 + geq) / static_cast<double>(B + 1);
  std::sort(result.permutation_stats.begin(), result.permutation_stats.end());
  return result;
}

void write_cpt_csv(const std::filesystem::path& path, const CptResult& result) {
  CsvTable csv;
  csv.header = {"kind", "value"};
  csv.rows.push_back({"observed", format_double(result.observed)});
  csv.rows.push_back({"p_value", format_double(result.p_value)});
  csv.rows.push_back({"B", std::to_string(result.B)});
  csv.rows.push_back({"seed", std::to_string(result.seed)});
  csv.rows.push_back({"classifier", result.classifier});
  for (double stat : result.permutation_stats) {
    csv.rows.push_back({"perm", format_double(stat)});
  }
  write_csv(path, csv);
}

}  // namespace pairflow
