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

#include "pairflow/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "pairflow/csv.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/features.hpp"
#include "pairflow/rng.hpp"

namespace pairflow {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError("stage " + stage + ": " + e.what(), e.achieved_flow);
  } catch (const NumericError& e) {
    throw NumericError("stage " + stage + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("stage " + stage + ": " + e.what());
  }
}

void check_covariate_names(const std::vector<std::string>& names,
                           const std::string& what) {
  for (const auto& name : names) {
    if (!is_known_covariate(name)) {
      throw ConfigError(what + ": unknown covariate '" + name + "'");
    }
  }
}

std::vector<const SubmissionRecord*> record_pointers(const Corpus& corpus) {
  std::vector<const SubmissionRecord*> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.records) out.push_back(&r);
  return out;
}

}  // namespace

void StudyConfig::validate() const {
  if (corpus_path.has_value() == synthetic.has_value()) {
    throw ConfigError("config: exactly one corpus source required ('corpus' or 'synthetic')");
  }
  if (synthetic) {
    if (synthetic->n < 2) throw ConfigError("config: synthetic.n must be >= 2");
    synthetic->params.validate();
  }
  if (borderline_min > borderline_max) {
    throw ConfigError("config: borderline min_avg > max_avg");
  }
  if (!(treatment_quantile > 0.0 && treatment_quantile < 1.0)) {
    throw ConfigError("config: treatment_quantile must lie in (0,1)");
  }
  if (cluster_k < 1) throw ConfigError("config: cluster.k must be >= 1");
  cost.validate();
  check_covariate_names(propensity_covariates, "propensity covariates");
  check_covariate_names(balance_covariates, "balance covariates");
  if (propensity_ridge < 0) throw ConfigError("config: propensity.ridge must be >= 0");
  if (cpt_B < 19) throw ConfigError("config: cpt.B must be >= 19");
  if (cpt.classifier != "forest" && cpt.classifier != "logistic") {
    throw ConfigError("config: cpt.classifier must be 'forest' or 'logistic'");
  }
  if (!(inference_level > 0.0 && inference_level < 1.0)) {
    throw ConfigError("config: inference.level must lie in (0,1)");
  }
  if (similarity_draws < 1) throw ConfigError("config: similarity_draws must be >= 1");
  if (reviewer_counts.empty()) throw ConfigError("config: reviewer_counts empty");
}

namespace {

void reject_unknown_keys(const nlohmann::json& doc,
                         const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

StudyConfig StudyConfig::from_json(const nlohmann::json& doc) {
  StudyConfig cfg;
  reject_unknown_keys(doc,
                      {"seed", "outdir", "corpus", "synthetic", "borderline",
                       "treatment_quantile", "cluster", "cost", "propensity",
                       "balance_covariates", "cpt", "inference", "similarity_draws"},
                      "top level");
  if (doc.contains("seed")) cfg.master_seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("outdir")) cfg.outdir = doc.at("outdir").get<std::string>();
  if (doc.contains("corpus")) cfg.corpus_path = doc.at("corpus").get<std::string>();
  if (doc.contains("synthetic")) {
    const auto& block = doc.at("synthetic");
    reject_unknown_keys(block, {"n", "seed", "params"}, "synthetic");
    SyntheticBlock synth;
    if (block.contains("n")) synth.n = block.at("n").get<int>();
    if (block.contains("seed")) synth.seed = block.at("seed").get<std::uint64_t>();
    if (block.contains("params")) {
      const auto& params = block.at("params");
      reject_unknown_keys(
          params,
          {"embedding_dim", "num_topics", "num_keywords", "year_min", "year_max",
           "four_reviewer_frac", "confounding", "covariate_noise", "ranking_noise",
           "rating_scale", "rating_noise", "embedding_noise", "sentiment_noise",
           "treatment_quantile", "treatment_effect",
           "outcome_intercept", "outcome_quality", "outcome_rating"},
          "synthetic.params");
      auto& p = synth.params;
      auto get = [&](const char* key, auto& field) {
        if (params.contains(key)) {
          field = params.at(key).get<std::decay_t<decltype(field)>>();
        }
      };
      get("embedding_dim", p.embedding_dim);
      get("num_topics", p.num_topics);
      get("num_keywords", p.num_keywords);
      get("year_min", p.year_min);
      get("year_max", p.year_max);
      get("four_reviewer_frac", p.four_reviewer_frac);
      get("confounding", p.confounding);
      get("covariate_noise", p.covariate_noise);
      get("ranking_noise", p.ranking_noise);
      get("rating_scale", p.rating_scale);
      get("rating_noise", p.rating_noise);
      get("embedding_noise", p.embedding_noise);
      get("sentiment_noise", p.sentiment_noise);
      get("treatment_quantile", p.treatment_quantile);
      get("treatment_effect", p.treatment_effect);
      get("outcome_intercept", p.outcome_intercept);
      get("outcome_quality", p.outcome_quality);
      get("outcome_rating", p.outcome_rating);
    }
    cfg.synthetic = synth;
  }
  if (doc.contains("borderline")) {
    const auto& block = doc.at("borderline");
    reject_unknown_keys(block, {"min_avg", "max_avg", "reviewer_counts"}, "borderline");
    if (block.contains("min_avg")) cfg.borderline_min = block.at("min_avg").get<double>();
    if (block.contains("max_avg")) cfg.borderline_max = block.at("max_avg").get<double>();
    if (block.contains("reviewer_counts")) {
      cfg.reviewer_counts.clear();
      for (const auto& v : block.at("reviewer_counts")) {
        cfg.reviewer_counts.insert(v.get<int>());
      }
    }
  }
  if (doc.contains("treatment_quantile")) {
    cfg.treatment_quantile = doc.at("treatment_quantile").get<double>();
  }
  if (doc.contains("cluster")) {
    const auto& block = doc.at("cluster");
    reject_unknown_keys(block, {"enabled", "k"}, "cluster");
    if (block.contains("enabled")) cfg.cluster_enabled = block.at("enabled").get<bool>();
    if (block.contains("k")) cfg.cluster_k = block.at("k").get<int>();
  }
  if (doc.contains("cost")) {
    const auto& block = doc.at("cost");
    reject_unknown_keys(block,
                        {"near_exact_keys", "near_exact_penalty", "dose_caliper",
                         "caliper_penalty", "fine_balance_keys", "fine_balance_penalty",
                         "cost_scale", "ratings_tolerance"},
                        "cost");
    auto& cost = cfg.cost;
    if (block.contains("near_exact_keys")) {
      cost.near_exact_keys = block.at("near_exact_keys").get<std::vector<std::string>>();
    }
    if (block.contains("near_exact_penalty")) {
      cost.near_exact_penalty = block.at("near_exact_penalty").get<double>();
    }
    if (block.contains("dose_caliper")) {
      cost.dose_caliper = block.at("dose_caliper").get<double>();
    }
    if (block.contains("caliper_penalty")) {
      cost.caliper_penalty = block.at("caliper_penalty").get<double>();
    }
    if (block.contains("fine_balance_keys")) {
      cost.fine_balance_keys = block.at("fine_balance_keys").get<std::vector<std::string>>();
    }
    if (block.contains("fine_balance_penalty")) {
      cost.fine_balance_penalty = block.at("fine_balance_penalty").get<double>();
    }
    if (block.contains("cost_scale")) {
      cost.cost_scale = block.at("cost_scale").get<long long>();
    }
    if (block.contains("ratings_tolerance")) {
      cost.ratings_tolerance = block.at("ratings_tolerance").get<double>();
    }
  }
  if (doc.contains("propensity")) {
    const auto& block = doc.at("propensity");
    reject_unknown_keys(block, {"covariates", "ridge", "tol", "max_iter"}, "propensity");
    if (block.contains("covariates")) {
      cfg.propensity_covariates = block.at("covariates").get<std::vector<std::string>>();
    }
    if (block.contains("ridge")) cfg.propensity_ridge = block.at("ridge").get<double>();
    if (block.contains("tol")) cfg.propensity_tol = block.at("tol").get<double>();
    if (block.contains("max_iter")) {
      cfg.propensity_max_iter = block.at("max_iter").get<int>();
    }
  }
  if (doc.contains("balance_covariates")) {
    cfg.balance_covariates = doc.at("balance_covariates").get<std::vector<std::string>>();
  }
  if (doc.contains("cpt")) {
    const auto& block = doc.at("cpt");
    reject_unknown_keys(block,
                        {"B", "classifier", "trees", "min_leaf", "mtry", "min_pairs"},
                        "cpt");
    if (block.contains("B")) cfg.cpt_B = block.at("B").get<int>();
    if (block.contains("classifier")) {
      cfg.cpt.classifier = block.at("classifier").get<std::string>();
    }
    if (block.contains("trees")) cfg.cpt.forest.trees = block.at("trees").get<int>();
    if (block.contains("min_leaf")) {
      cfg.cpt.forest.min_leaf = block.at("min_leaf").get<int>();
    }
    if (block.contains("mtry")) cfg.cpt.forest.mtry = block.at("mtry").get<int>();
    if (block.contains("min_pairs")) cfg.cpt_min_pairs = block.at("min_pairs").get<int>();
  }
  if (doc.contains("inference")) {
    const auto& block = doc.at("inference");
    reject_unknown_keys(block, {"level"}, "inference");
    if (block.contains("level")) cfg.inference_level = block.at("level").get<double>();
  }
  if (doc.contains("similarity_draws")) {
    cfg.similarity_draws = doc.at("similarity_draws").get<int>();
  }
  cfg.validate();
  return cfg;
}

StudyConfig StudyConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json StudyConfig::to_json() const {
  nlohmann::json doc;
  doc["seed"] = master_seed;
  doc["outdir"] = outdir.string();
  if (corpus_path) doc["corpus"] = corpus_path->string();
  if (synthetic) {
    nlohmann::json block;
    block["n"] = synthetic->n;
    if (synthetic->seed) block["seed"] = *synthetic->seed;
    const auto& p = synthetic->params;
    block["params"] = {{"embedding_dim", p.embedding_dim},
                       {"num_topics", p.num_topics},
                       {"num_keywords", p.num_keywords},
                       {"year_min", p.year_min},
                       {"year_max", p.year_max},
                       {"four_reviewer_frac", p.four_reviewer_frac},
                       {"confounding", p.confounding},
                       {"covariate_noise", p.covariate_noise},
                       {"ranking_noise", p.ranking_noise},
                       {"rating_scale", p.rating_scale},
                       {"rating_noise", p.rating_noise},
                       {"embedding_noise", p.embedding_noise},
                       {"sentiment_noise", p.sentiment_noise},
                       {"treatment_quantile", p.treatment_quantile},
                       {"treatment_effect", p.treatment_effect},
                       {"outcome_intercept", p.outcome_intercept},
                       {"outcome_quality", p.outcome_quality},
                       {"outcome_rating", p.outcome_rating}};
    doc["synthetic"] = block;
  }
  doc["borderline"] = {{"min_avg", borderline_min},
                       {"max_avg", borderline_max},
                       {"reviewer_counts", reviewer_counts}};
  doc["treatment_quantile"] = treatment_quantile;
  doc["cluster"] = {{"enabled", cluster_enabled}, {"k", cluster_k}};
  doc["cost"] = {{"near_exact_keys", cost.near_exact_keys},
                 {"near_exact_penalty", cost.near_exact_penalty},
                 {"dose_caliper", cost.dose_caliper},
                 {"caliper_penalty", cost.caliper_penalty},
                 {"fine_balance_keys", cost.fine_balance_keys},
                 {"fine_balance_penalty", cost.fine_balance_penalty},
                 {"cost_scale", cost.cost_scale},
                 {"ratings_tolerance", cost.ratings_tolerance}};
  doc["propensity"] = {{"covariates", propensity_covariates},
                       {"ridge", propensity_ridge},
                       {"tol", propensity_tol},
                       {"max_iter", propensity_max_iter}};
  doc["balance_covariates"] = balance_covariates;
  doc["cpt"] = {{"B", cpt_B},
                {"classifier", cpt.classifier},
                {"trees", cpt.forest.trees},
                {"min_leaf", cpt.forest.min_leaf},
                {"mtry", cpt.forest.mtry},
                {"min_pairs", cpt_min_pairs}};
  doc["inference"] = {{"level", inference_level}};
  doc["similarity_draws"] = similarity_draws;
  return doc;
}

fs::path effective_corpus_path(const StudyConfig& cfg) {
  if (cfg.cluster_enabled) return cfg.outdir / "corpus_clustered.csv";
  if (cfg.synthetic) return cfg.outdir / "corpus_synth.csv";
  return *cfg.corpus_path;
}

namespace {

Corpus synthesize(const StudyConfig& cfg) {
  const std::uint64_t seed = cfg.synthetic->seed
                                 ? *cfg.synthetic->seed
                                 : Rng(cfg.master_seed).stream("synth").seed();
  return generate_synthetic_corpus(seed, cfg.synthetic->n, cfg.synthetic->params);
}

void cluster_topics(const StudyConfig& cfg, Corpus& corpus) {
  if (corpus.size() < 2) {
    throw ValidationError("cluster: need at least 2 records");
  }
  Eigen::MatrixXd embeddings(corpus.size(), corpus.embedding_dim);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (int d = 0; d < corpus.embedding_dim; ++d) {
      embeddings(static_cast<Eigen::Index>(i), d) = corpus.records[i].embedding[d];
    }
  }
  const SimilarityMatrix similarity = pairwise_similarity(embeddings);
  const std::uint64_t seed = Rng(cfg.master_seed).stream("cluster").seed();
  const ClusterAssignment labels = spectral_clustering(similarity, cfg.cluster_k, seed);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpus.records[i].topic_cluster = "s" + std::to_string(labels.labels[i]);
  }
}

struct MatchOutputs {
  Corpus corpus;  // filtered
  TreatmentAssignment assignment;
  std::map<std::string, PropensityModel> models;
  std::unordered_map<std::string, double> scores;
  MatchedPairs pairs;
};

MatchOutputs compute_match(const StudyConfig& cfg, const Corpus& source) {
  MatchOutputs out;
  out.corpus = run_stage("filter", [&] {
    Corpus filtered = filter_borderline(source, cfg.borderline_min, cfg.borderline_max,
                                        cfg.reviewer_counts);
    if (filtered.records.empty()) {
      throw ValidationError("no records left after the borderline filter");
    }
    return filtered;
  });
  out.assignment = run_stage(
      "assign", [&] { return assign_treatment(out.corpus, cfg.treatment_quantile); });

  run_stage("propensity", [&] {
    std::map<int, std::vector<const SubmissionRecord*>> strata;
    for (const auto& record : out.corpus.records) {
      strata[record.reviewer_count()].push_back(&record);
    }
    for (const auto& [stratum, records] : strata) {
      std::vector<int> labels;
      labels.reserve(records.size());
      long long treated_count = 0;
      for (const auto* r : records) {
        const int label = out.assignment.is_treated(r->id) ? 1 : 0;
        treated_count += label;
        labels.push_back(label);
      }
      if (treated_count == 0) continue;  // nothing to match in this stratum
      if (treated_count == static_cast<long long>(records.size())) {
        throw InfeasibleError("stratum " + std::to_string(stratum) +
                                  ": every record is treated",
                              0);
      }
      const auto covariates = available_covariates(records, cfg.propensity_covariates);
      PropensityModel model =
          fit_propensity(records, labels, covariates, cfg.propensity_ridge,
                         cfg.propensity_tol, cfg.propensity_max_iter);
      const std::vector<double> scores = predict_scores(model, records);
      for (std::size_t i = 0; i < records.size(); ++i) {
        out.scores[records[i]->id] = scores[i];
      }
      out.models.emplace(std::to_string(stratum), std::move(model));
    }
    return 0;
  });

  out.pairs = run_stage("match", [&] {
    return match_stratified(out.corpus, out.assignment, out.scores, cfg.cost);
  });
  return out;
}

struct DiagnosticsOutputs {
  BalanceTable balance;
  std::vector<GapSummary> gaps;
  SimilarityGain similarity;
  std::map<std::string, CptResult> cpt;
};

DiagnosticsOutputs compute_diagnostics(const StudyConfig& cfg, const Corpus& corpus,
                                       const TreatmentAssignment& assignment,
                                       const MatchedPairs& pairs) {
  return run_stage("diagnostics", [&] {
    DiagnosticsOutputs out;
    out.balance = balance_table(corpus, assignment, pairs, cfg.balance_covariates);
    out.gaps = ranking_gap_summary(pairs);
    out.similarity = similarity_gain(corpus, pairs, cfg.similarity_draws,
                                     Rng(cfg.master_seed).stream("similarity").seed());
    const auto index = corpus.id_index();
    std::map<std::string, MatchedPairs> by_stratum;
    for (const auto& pair : pairs.pairs) {
      by_stratum[pair.stratum].pairs.push_back(pair);
    }
    for (const auto& [stratum, stratum_pairs] : by_stratum) {
      if (static_cast<int>(stratum_pairs.pairs.size()) < cfg.cpt_min_pairs) continue;
      std::vector<const SubmissionRecord*> records;
      for (const auto& pair : stratum_pairs.pairs) {
        records.push_back(&corpus.records[index.at(pair.treated_id)]);
        records.push_back(&corpus.records[index.at(pair.control_id)]);
      }
      const auto covariates = available_covariates(records, cfg.balance_covariates);
      const std::uint64_t seed =
          Rng(cfg.master_seed).stream("cpt " + stratum).seed();
      out.cpt.emplace(stratum,
                      classification_permutation_test(corpus, stratum_pairs, covariates,
                                                      cfg.cpt, cfg.cpt_B, seed));
    }
    return out;
  });
}

struct InferenceOutputs {
  PairedContingencyTable table;
  double p_value = 1.0;
  OddsRatioResult odds;
};

InferenceOutputs compute_inference(const StudyConfig& cfg, const Corpus& corpus,
                                   const MatchedPairs& pairs) {
  return run_stage("inference", [&] {
    InferenceOutputs out;
    std::unordered_map<std::string, int> outcomes;
    for (const auto& record : corpus.records) outcomes[record.id] = record.outcome;
    out.table = tabulate_pairs(pairs, outcomes);
    out.p_value = mcnemar_exact(out.table);
    out.odds = conditional_odds_ratio(out.table, cfg.inference_level);
    return out;
  });
}

// ---- bundle file writers ----

void write_assignment_csv(const fs::path& path, const TreatmentAssignment& assignment,
                          const Corpus& corpus) {
  CsvTable table;
  table.header = {"id", "treated", "avg_institution_ranking"};
  for (const auto& record : corpus.records) {
    table.rows.push_back({record.id, assignment.is_treated(record.id) ? "1" : "0",
                          format_double(record.avg_institution_ranking)});
  }
  write_csv(path, table);
}

TreatmentAssignment read_assignment_csv(const fs::path& path, double quantile) {
  const CsvTable table = read_csv(path);
  const int col_id = table.require_column("id");
  const int col_treated = table.require_column("treated");
  const int col_rank = table.require_column("avg_institution_ranking");
  TreatmentAssignment assignment;
  assignment.quantile = quantile;
  assignment.threshold_rank = std::numeric_limits<double>::lowest();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const bool treated = row[col_treated] == "1";
    (treated ? assignment.treated_ids : assignment.control_ids).push_back(row[col_id]);
    if (treated) {
      assignment.threshold_rank =
          std::max(assignment.threshold_rank,
                   parse_double(row[col_rank], "row " + std::to_string(i)));
    }
  }
  std::sort(assignment.treated_ids.begin(), assignment.treated_ids.end());
  std::sort(assignment.control_ids.begin(), assignment.control_ids.end());
  return assignment;
}

void write_scores_csv(const fs::path& path, const Corpus& corpus,
                      const TreatmentAssignment& assignment,
                      const std::unordered_map<std::string, double>& scores,
                      const MatchedPairs& pairs) {
  std::set<std::string> matched;
  for (const auto& pair : pairs.pairs) matched.insert(pair.control_id);
  CsvTable table;
  table.header = {"id", "stratum", "score", "treated", "matched_control"};
  for (const auto& record : corpus.records) {
    const auto it = scores.find(record.id);
    if (it == scores.end()) continue;  // stratum without treated units
    table.rows.push_back({record.id, std::to_string(record.reviewer_count()),
                          format_double(it->second),
                          assignment.is_treated(record.id) ? "1" : "0",
                          matched.count(record.id) ? "1" : "0"});
  }
  write_csv(path, table);
}

void write_gaps_csv(const fs::path& path, const std::vector<GapSummary>& gaps) {
  CsvTable table;
  table.header = {"stratum", "pair_count", "mean", "median", "q1", "q3"};
  for (const auto& summary : gaps) {
    table.rows.push_back({summary.stratum, std::to_string(summary.pair_count),
                          format_double(summary.mean), format_double(summary.median),
                          format_double(summary.q1), format_double(summary.q3)});
  }
  write_csv(path, table);
}

void write_similarity_csv(const fs::path& path, const SimilarityGain& gain) {
  CsvTable table;
  table.header = {"group", "cosine"};
  for (double v : gain.before) table.rows.push_back({"before", format_double(v)});
  for (double v : gain.after) table.rows.push_back({"after", format_double(v)});
  write_csv(path, table);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot hash file: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buffer[4096];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buffer[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

// Removes the listed files when a writing step throws.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (!armed_) return;
    for (const auto& path : written_) {
      std::error_code ec;
      fs::remove(path, ec);
    }
  }
  void record(const fs::path& path) { written_.push_back(path); }
  void disarm() { armed_ = false; }
  const std::vector<fs::path>& written() const { return written_; }

 private:
  std::vector<fs::path> written_;
  bool armed_ = true;
};

}  // namespace

ReportBundle run_pipeline(const StudyConfig& cfg) {
  cfg.validate();
  ReportBundle bundle;
  bundle.source_corpus = run_stage("acquire", [&] {
    Corpus corpus = cfg.synthetic ? synthesize(cfg) : load_corpus(*cfg.corpus_path);
    validate_corpus(corpus);
    return corpus;
  });
  if (cfg.cluster_enabled) {
    run_stage("cluster", [&] {
      cluster_topics(cfg, bundle.source_corpus);
      return 0;
    });
  }
  MatchOutputs matched = compute_match(cfg, bundle.source_corpus);
  bundle.corpus = std::move(matched.corpus);
  bundle.assignment = std::move(matched.assignment);
  bundle.models = std::move(matched.models);
  bundle.scores = std::move(matched.scores);
  bundle.pairs = std::move(matched.pairs);

  DiagnosticsOutputs diag =
      compute_diagnostics(cfg, bundle.corpus, bundle.assignment, bundle.pairs);
  bundle.balance = std::move(diag.balance);
  bundle.gaps = std::move(diag.gaps);
  bundle.similarity = std::move(diag.similarity);
  bundle.cpt = std::move(diag.cpt);

  InferenceOutputs inference = compute_inference(cfg, bundle.corpus, bundle.pairs);
  bundle.table = inference.table;
  bundle.p_value = inference.p_value;
  bundle.odds = inference.odds;
  return bundle;
}

void write_bundle(const StudyConfig& cfg, const ReportBundle& bundle) {
  fs::create_directories(cfg.outdir);
  OutputGuard guard;
  auto track = [&](const fs::path& path) {
    guard.record(path);
    return path;
  };

  if (cfg.synthetic) {
    // When clustering ran, source_corpus carries relabeled topics; the staged
    // path needs the raw synthetic corpus, which regenerates deterministically.
    const Corpus raw = cfg.cluster_enabled ? synthesize(cfg) : bundle.source_corpus;
    save_corpus(track(cfg.outdir / "corpus_synth.csv"), raw);
  }
  if (cfg.cluster_enabled) {
    save_corpus(track(cfg.outdir / "corpus_clustered.csv"), bundle.source_corpus);
  }
  save_corpus(track(cfg.outdir / "corpus_used.csv"), bundle.corpus);
  write_assignment_csv(track(cfg.outdir / "assignment.csv"), bundle.assignment,
                       bundle.corpus);
  write_scores_csv(track(cfg.outdir / "scores.csv"), bundle.corpus, bundle.assignment,
                   bundle.scores, bundle.pairs);
  write_pairs_csv(track(cfg.outdir / "pairs.csv"), bundle.pairs);
  for (const auto& [stratum, model] : bundle.models) {
    write_text(track(cfg.outdir / ("propensity_" + stratum + ".json")),
               export_model_json(model));
  }
  write_balance_csv(track(cfg.outdir / "balance.csv"), bundle.balance);
  write_gaps_csv(track(cfg.outdir / "gaps.csv"), bundle.gaps);
  write_similarity_csv(track(cfg.outdir / "similarity.csv"), bundle.similarity);
  for (const auto& [stratum, result] : bundle.cpt) {
    write_cpt_csv(track(cfg.outdir / ("cpt_" + stratum + ".csv")), result);
  }
  write_text(track(cfg.outdir / "inference.json"),
             export_inference_json(bundle.table, bundle.p_value, bundle.odds));
  write_manifest(cfg);
  guard.disarm();
}

ReportBundle run_and_write(const StudyConfig& cfg) {
  ReportBundle bundle = run_pipeline(cfg);
  write_bundle(cfg, bundle);
  return bundle;
}

fs::path stage_synth(const StudyConfig& cfg) {
  if (!cfg.synthetic) throw ConfigError("synth: config has no synthetic block");
  const Corpus corpus = run_stage("synthesize", [&] { return synthesize(cfg); });
  fs::create_directories(cfg.outdir);
  const fs::path path = cfg.outdir / "corpus_synth.csv";
  save_corpus(path, corpus);
  return path;
}

fs::path stage_cluster(const StudyConfig& cfg) {
  const fs::path source =
      cfg.synthetic ? cfg.outdir / "corpus_synth.csv" : *cfg.corpus_path;
  Corpus corpus = run_stage("cluster", [&] {
    Corpus loaded = load_corpus(source);
    cluster_topics(cfg, loaded);
    return loaded;
  });
  fs::create_directories(cfg.outdir);
  const fs::path path = cfg.outdir / "corpus_clustered.csv";
  save_corpus(path, corpus);
  return path;
}

void stage_match(const StudyConfig& cfg) {
  const Corpus source =
      run_stage("acquire", [&] { return load_corpus(effective_corpus_path(cfg)); });
  const MatchOutputs out = compute_match(cfg, source);
  fs::create_directories(cfg.outdir);
  OutputGuard guard;
  auto track = [&](const fs::path& path) {
    guard.record(path);
    return path;
  };
  save_corpus(track(cfg.outdir / "corpus_used.csv"), out.corpus);
  write_assignment_csv(track(cfg.outdir / "assignment.csv"), out.assignment, out.corpus);
  write_scores_csv(track(cfg.outdir / "scores.csv"), out.corpus, out.assignment,
                   out.scores, out.pairs);
  write_pairs_csv(track(cfg.outdir / "pairs.csv"), out.pairs);
  for (const auto& [stratum, model] : out.models) {
    write_text(track(cfg.outdir / ("propensity_" + stratum + ".json")),
               export_model_json(model));
  }
  guard.disarm();
}

void stage_diagnose(const StudyConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.outdir / "corpus_used.csv");
  const TreatmentAssignment assignment =
      read_assignment_csv(cfg.outdir / "assignment.csv", cfg.treatment_quantile);
  const MatchedPairs pairs = read_pairs_csv(cfg.outdir / "pairs.csv");
  const DiagnosticsOutputs out = compute_diagnostics(cfg, corpus, assignment, pairs);
  OutputGuard guard;
  auto track = [&](const fs::path& path) {
    guard.record(path);
    return path;
  };
  write_balance_csv(track(cfg.outdir / "balance.csv"), out.balance);
  write_gaps_csv(track(cfg.outdir / "gaps.csv"), out.gaps);
  write_similarity_csv(track(cfg.outdir / "similarity.csv"), out.similarity);
  for (const auto& [stratum, result] : out.cpt) {
    write_cpt_csv(track(cfg.outdir / ("cpt_" + stratum + ".csv")), result);
  }
  guard.disarm();
}

void stage_infer(const StudyConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.outdir / "corpus_used.csv");
  const MatchedPairs pairs = read_pairs_csv(cfg.outdir / "pairs.csv");
  const InferenceOutputs out = compute_inference(cfg, corpus, pairs);
  write_text(cfg.outdir / "inference.json",
             export_inference_json(out.table, out.p_value, out.odds));
}

void write_manifest(const StudyConfig& cfg) {
  const std::string config_text = cfg.to_json().dump(2);
  write_text(cfg.outdir / "config_used.json", config_text);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(cfg.outdir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "manifest.txt" || name.rfind("plot_", 0) == 0) continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());

  std::string manifest;
  manifest += "tool=pairflow\n";
  manifest += std::string("version=") + kVersion + "\n";
  manifest += "config_hash=" + hex64(fnv1a64(config_text)) + "\n";
  manifest += "master_seed=" + std::to_string(cfg.master_seed) + "\n";
  for (const auto& name : names) {
    manifest += "file=" + name + " " + hex64(hash_file(cfg.outdir / name)) + "\n";
  }
  write_text(cfg.outdir / "manifest.txt", manifest);
}

fs::path emit_plot_data(const fs::path& bundle_dir, const std::string& kind) {
  auto out_path = [&](const std::string& name) { return bundle_dir / name; };

  if (kind == "propensity-hist") {
    const CsvTable scores = read_csv(bundle_dir / "scores.csv");
    const int col_score = scores.require_column("score");
    const int col_treated = scores.require_column("treated");
    const int col_matched = scores.require_column("matched_control");
    CsvTable table;
    table.header = {"score", "group"};
    for (const auto& row : scores.rows) {
      if (row[col_treated] == "1") {
        table.rows.push_back({row[col_score], "treated"});
      } else {
        table.rows.push_back({row[col_score], "control_all"});
        if (row[col_matched] == "1") {
          table.rows.push_back({row[col_score], "control_matched"});
        }
      }
    }
    const fs::path path = out_path("plot_propensity_hist.csv");
    write_csv(path, table);
    return path;
  }
  if (kind == "similarity-hist") {
    const CsvTable similarity = read_csv(bundle_dir / "similarity.csv");
    const int col_group = similarity.require_column("group");
    const int col_cosine = similarity.require_column("cosine");
    CsvTable table;
    table.header = {"cosine", "group"};
    for (const auto& row : similarity.rows) {
      table.rows.push_back({row[col_cosine], row[col_group]});
    }
    const fs::path path = out_path("plot_similarity_hist.csv");
    write_csv(path, table);
    return path;
  }
  if (kind == "gap-box") {
    const CsvTable pairs = read_csv(bundle_dir / "pairs.csv");
    const int col_stratum = pairs.require_column("stratum");
    const int col_gap = pairs.require_column("rank_gap");
    CsvTable table;
    table.header = {"stratum", "rank_gap"};
    for (const auto& row : pairs.rows) {
      table.rows.push_back({row[col_stratum], row[col_gap]});
    }
    const fs::path path = out_path("plot_gap_box.csv");
    write_csv(path, table);
    return path;
  }
  if (kind == "cpt-hist") {
    CsvTable table;
    table.header = {"stratum", "kind", "stat"};
    std::vector<fs::path> cpt_files;
    for (const auto& entry : fs::directory_iterator(bundle_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("cpt_", 0) == 0 && name.size() > 8 &&
          name.substr(name.size() - 4) == ".csv" && name.rfind("plot_", 0) != 0) {
        cpt_files.push_back(entry.path());
      }
    }
    std::sort(cpt_files.begin(), cpt_files.end());
    if (cpt_files.empty()) {
      throw ConfigError("plot-data cpt-hist: no cpt_<stratum>.csv files in " +
                        bundle_dir.string());
    }
    for (const auto& file : cpt_files) {
      const std::string name = file.filename().string();
      const std::string stratum = name.substr(4, name.size() - 8);
      const CsvTable cpt = read_csv(file);
      const int col_kind = cpt.require_column("kind");
      const int col_value = cpt.require_column("value");
      for (const auto& row : cpt.rows) {
        if (row[col_kind] == "perm" || row[col_kind] == "observed") {
          table.rows.push_back({stratum, row[col_kind], row[col_value]});
        }
      }
    }
    const fs::path path = out_path("plot_cpt_hist.csv");
    write_csv(path, table);
    return path;
  }
  throw ConfigError("plot-data: unknown kind '" + kind +
                    "' (expected propensity-hist, similarity-hist, gap-box, cpt-hist)");
}

}  // namespace pairflow
