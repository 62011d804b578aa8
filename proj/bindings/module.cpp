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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "pairflow/corpus.hpp"
#include "pairflow/diagnostics.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/features.hpp"
#include "pairflow/inference.hpp"
#include "pairflow/matching.hpp"
#include "pairflow/pipeline.hpp"
#include "pairflow/propensity.hpp"

namespace py = pybind11;
using namespace pairflow;

namespace {

// (pairs, total_cost) for raw integer cost matrices; the test-oracle-sized
// entry point for driving the solver directly from python.
std::pair<std::vector<std::pair<int, int>>, long long> match_costs(
    const std::vector<std::vector<long long>>& delta,
    const std::vector<std::vector<long long>>& Delta) {
  const TripartiteNetwork network = build_network_from_costs(delta, Delta);
  const FlowSolution solution = solve_min_cost_flow(network);
  return {extract_pair_indices(network, solution), solution.total_cost};
}

py::dict run_study(const std::string& config_json) {
  const StudyConfig cfg = StudyConfig::from_json(nlohmann::json::parse(config_json));
  const ReportBundle bundle = run_and_write(cfg);
  py::dict out;
  out["pairs"] = bundle.pairs.pairs.size();
  out["p_value"] = bundle.p_value;
  out["odds_ratio"] = bundle.odds.point;
  out["ci"] = py::make_tuple(bundle.odds.ci.lower, bundle.odds.ci.upper);
  out["max_smd_before"] = bundle.balance.max_smd_before();
  out["max_smd_after"] = bundle.balance.max_smd_after();
  out["outdir"] = cfg.outdir.string();
  return out;
}

SimilarityMatrix similarity_from_matrix(const Eigen::MatrixXd& values) {
  SimilarityMatrix sim{values};
  sim.validate();
  return sim;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "matched-pair study designs via tripartite network flow";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "PairflowConfigError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "PairflowValidationError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "PairflowInfeasibleError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "PairflowNumericError", PyExc_ArithmeticError);

  py::class_<SubmissionRecord>(m, "SubmissionRecord")
      .def(py::init<>())
      .def_readwrite("id", &SubmissionRecord::id)
      .def_readwrite("year", &SubmissionRecord::year)
      .def_readwrite("ratings", &SubmissionRecord::ratings)
      .def_readwrite("sentiments", &SubmissionRecord::sentiments)
      .def_readwrite("num_authors", &SubmissionRecord::num_authors)
      .def_readwrite("num_figures", &SubmissionRecord::num_figures)
      .def_readwrite("num_references", &SubmissionRecord::num_references)
      .def_readwrite("num_sections", &SubmissionRecord::num_sections)
      .def_readwrite("complexity", &SubmissionRecord::complexity)
      .def_readwrite("topic_cluster", &SubmissionRecord::topic_cluster)
      .def_readwrite("primary_keyword", &SubmissionRecord::primary_keyword)
      .def_readwrite("avg_institution_ranking", &SubmissionRecord::avg_institution_ranking)
      .def_readwrite("embedding", &SubmissionRecord::embedding)
      .def_readwrite("outcome", &SubmissionRecord::outcome)
      .def_property_readonly("reviewer_count", &SubmissionRecord::reviewer_count)
      .def_property_readonly("mean_rating", &SubmissionRecord::mean_rating);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<>())
      .def_readwrite("records", &Corpus::records)
      .def_readwrite("embedding_dim", &Corpus::embedding_dim)
      .def_readwrite("provenance", &Corpus::provenance)
      .def("__len__", &Corpus::size);

  py::class_<SyntheticParams>(m, "SyntheticParams")
      .def(py::init<>())
      .def_readwrite("embedding_dim", &SyntheticParams::embedding_dim)
      .def_readwrite("num_topics", &SyntheticParams::num_topics)
      .def_readwrite("num_keywords", &SyntheticParams::num_keywords)
      .def_readwrite("year_min", &SyntheticParams::year_min)
      .def_readwrite("year_max", &SyntheticParams::year_max)
      .def_readwrite("four_reviewer_frac", &SyntheticParams::four_reviewer_frac)
      .def_readwrite("confounding", &SyntheticParams::confounding)
      .def_readwrite("covariate_noise", &SyntheticParams::covariate_noise)
      .def_readwrite("ranking_noise", &SyntheticParams::ranking_noise)
      .def_readwrite("rating_scale", &SyntheticParams::rating_scale)
      .def_readwrite("rating_noise", &SyntheticParams::rating_noise)
      .def_readwrite("embedding_noise", &SyntheticParams::embedding_noise)
      .def_readwrite("sentiment_noise", &SyntheticParams::sentiment_noise)
      .def_readwrite("treatment_quantile", &SyntheticParams::treatment_quantile)
      .def_readwrite("treatment_effect", &SyntheticParams::treatment_effect)
      .def_readwrite("outcome_intercept", &SyntheticParams::outcome_intercept)
      .def_readwrite("outcome_quality", &SyntheticParams::outcome_quality)
      .def_readwrite("outcome_rating", &SyntheticParams::outcome_rating);

  py::class_<TreatmentAssignment>(m, "TreatmentAssignment")
      .def_readonly("treated_ids", &TreatmentAssignment::treated_ids)
      .def_readonly("control_ids", &TreatmentAssignment::control_ids)
      .def_readonly("quantile", &TreatmentAssignment::quantile)
      .def_readonly("threshold_rank", &TreatmentAssignment::threshold_rank)
      .def("is_treated", &TreatmentAssignment::is_treated, py::arg("id"));

  py::class_<CostConfig>(m, "CostConfig")
      .def(py::init<>())
      .def_readwrite("near_exact_keys", &CostConfig::near_exact_keys)
      .def_readwrite("near_exact_penalty", &CostConfig::near_exact_penalty)
      .def_readwrite("dose_caliper", &CostConfig::dose_caliper)
      .def_readwrite("caliper_penalty", &CostConfig::caliper_penalty)
      .def_readwrite("fine_balance_keys", &CostConfig::fine_balance_keys)
      .def_readwrite("fine_balance_penalty", &CostConfig::fine_balance_penalty)
      .def_readwrite("cost_scale", &CostConfig::cost_scale)
      .def_readwrite("ratings_tolerance", &CostConfig::ratings_tolerance);

  py::class_<MatchedPair>(m, "MatchedPair")
      .def_readonly("treated_id", &MatchedPair::treated_id)
      .def_readonly("control_id", &MatchedPair::control_id)
      .def_readonly("stratum", &MatchedPair::stratum)
      .def_readonly("delta_cost", &MatchedPair::delta_cost)
      .def_readonly("rank_gap", &MatchedPair::rank_gap);

  py::class_<MatchedPairs>(m, "MatchedPairs")
      .def_readonly("pairs", &MatchedPairs::pairs)
      .def_readonly("total_cost", &MatchedPairs::total_cost)
      .def("__len__", [](const MatchedPairs& p) { return p.pairs.size(); });

  py::class_<ClusterAssignment>(m, "ClusterAssignment")
      .def_readonly("labels", &ClusterAssignment::labels)
      .def_readonly("k", &ClusterAssignment::k);

  py::class_<BalanceRow>(m, "BalanceRow")
      .def_readonly("covariate", &BalanceRow::covariate)
      .def_readonly("level", &BalanceRow::level)
      .def_readonly("treated_mean", &BalanceRow::treated_mean)
      .def_readonly("control_mean_before", &BalanceRow::control_mean_before)
      .def_readonly("smd_before", &BalanceRow::smd_before)
      .def_readonly("matched_control_mean", &BalanceRow::matched_control_mean)
      .def_readonly("smd_after", &BalanceRow::smd_after);

  py::class_<BalanceTable>(m, "BalanceTable")
      .def_readonly("rows", &BalanceTable::rows)
      .def_property_readonly("max_smd_before", &BalanceTable::max_smd_before)
      .def_property_readonly("max_smd_after", &BalanceTable::max_smd_after);

  py::class_<GapSummary>(m, "GapSummary")
      .def_readonly("stratum", &GapSummary::stratum)
      .def_readonly("pair_count", &GapSummary::pair_count)
      .def_readonly("mean", &GapSummary::mean)
      .def_readonly("median", &GapSummary::median)
      .def_readonly("q1", &GapSummary::q1)
      .def_readonly("q3", &GapSummary::q3);

  py::class_<SimilarityGain>(m, "SimilarityGain")
      .def_readonly("before", &SimilarityGain::before)
      .def_readonly("after", &SimilarityGain::after)
      .def_readonly("before_median", &SimilarityGain::before_median)
      .def_readonly("after_median", &SimilarityGain::after_median);

  py::class_<CptResult>(m, "CptResult")
      .def_readonly("observed", &CptResult::observed)
      .def_readonly("permutation_stats", &CptResult::permutation_stats)
      .def_readonly("p_value", &CptResult::p_value)
      .def_readonly("B", &CptResult::B)
      .def_readonly("seed", &CptResult::seed)
      .def_readonly("classifier", &CptResult::classifier);

  py::class_<CptConfig>(m, "CptConfig")
      .def(py::init<>())
      .def_readwrite("classifier", &CptConfig::classifier)
      .def_property(
          "trees", [](const CptConfig& c) { return c.forest.trees; },
          [](CptConfig& c, int v) { c.forest.trees = v; })
      .def_property(
          "min_leaf", [](const CptConfig& c) { return c.forest.min_leaf; },
          [](CptConfig& c, int v) { c.forest.min_leaf = v; })
      .def_property(
          "mtry", [](const CptConfig& c) { return c.forest.mtry; },
          [](CptConfig& c, int v) { c.forest.mtry = v; });

  py::class_<PairedContingencyTable>(m, "PairedContingencyTable")
      .def(py::init([](long long n11, long long n10, long long n01, long long n00) {
             return PairedContingencyTable{n11, n10, n01, n00};
           }),
           py::arg("n11"), py::arg("n10"), py::arg("n01"), py::arg("n00"))
      .def_readwrite("n11", &PairedContingencyTable::n11)
      .def_readwrite("n10", &PairedContingencyTable::n10)
      .def_readwrite("n01", &PairedContingencyTable::n01)
      .def_readwrite("n00", &PairedContingencyTable::n00)
      .def_property_readonly("total", &PairedContingencyTable::total)
      .def_property_readonly("discordant", &PairedContingencyTable::discordant);

  py::class_<Interval>(m, "Interval")
      .def_readonly("lower", &Interval::lower)
      .def_readonly("upper", &Interval::upper);

  py::class_<OddsRatioResult>(m, "OddsRatioResult")
      .def_readonly("point", &OddsRatioResult::point)
      .def_readonly("ci", &OddsRatioResult::ci)
      .def_readonly("level", &OddsRatioResult::level)
      .def_readonly("note", &OddsRatioResult::note);

  // corpus
  m.def("generate_synthetic_corpus", &generate_synthetic_corpus, py::arg("seed"),
        py::arg("n"), py::arg("params") = SyntheticParams{});
  m.def("load_corpus",
        [](const std::filesystem::path& path) { return load_corpus(path); },
        py::arg("path"));
  m.def("save_corpus",
        [](const std::filesystem::path& path, const Corpus& corpus) {
          save_corpus(path, corpus);
        },
        py::arg("path"), py::arg("corpus"));
  m.def("filter_borderline",
        [](const Corpus& corpus, double lo, double hi, const std::set<int>& counts) {
          return filter_borderline(corpus, lo, hi, counts);
        },
        py::arg("corpus"), py::arg("min_avg"), py::arg("max_avg"),
        py::arg("reviewer_counts") = std::set<int>{3, 4});
  m.def("assign_treatment", &assign_treatment, py::arg("corpus"), py::arg("quantile"));
  m.def("dichotomize_decision",
        [](const std::string& raw) { return dichotomize_decision(raw); },
        py::arg("raw"));
  m.def("compute_institution_ranking",
        [](const std::vector<std::pair<std::string, int>>& events, int as_of_year) {
          std::vector<InstitutionHistory::Event> converted;
          converted.reserve(events.size());
          for (const auto& [institution, year] : events) {
            converted.push_back({institution, year});
          }
          return compute_institution_ranking(
              InstitutionHistory::from_events(std::move(converted)), as_of_year);
        },
        py::arg("accept_events"), py::arg("as_of_year"));
  m.def("jaccard_similarity", &jaccard_similarity, py::arg("a"), py::arg("b"));
  m.def("normalized_levenshtein", &normalized_levenshtein, py::arg("a"), py::arg("b"));

  // features
  m.def("cosine_similarity",
        [](const std::vector<double>& u, const std::vector<double>& v) {
          return cosine_similarity(u, v);
        },
        py::arg("u"), py::arg("v"));
  m.def("pairwise_similarity",
        [](const Eigen::MatrixXd& embeddings) {
          return pairwise_similarity(embeddings).values;
        },
        py::arg("embeddings"));
  m.def("spectral_clustering",
        [](const Eigen::MatrixXd& similarity, int k, std::uint64_t seed) {
          return spectral_clustering(similarity_from_matrix(similarity), k, seed);
        },
        py::arg("similarity"), py::arg("k"), py::arg("seed"));
  m.def("kmeans",
        [](const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts) {
          return kmeans(points, k, seed, restarts).assignment;
        },
        py::arg("points"), py::arg("k"), py::arg("seed"), py::arg("restarts") = 10);

  // matching
  m.def("match_stratified",
        [](const Corpus& corpus, const TreatmentAssignment& assignment,
           const std::unordered_map<std::string, double>& scores, const CostConfig& cfg) {
          return match_stratified(corpus, assignment, scores, cfg);
        },
        py::arg("corpus"), py::arg("assignment"), py::arg("scores"),
        py::arg("cost") = CostConfig{});
  m.def("match_costs", &match_costs, py::arg("delta"), py::arg("Delta"),
        "solve the tripartite min-cost flow for raw scaled-integer cost matrices");

  // diagnostics
  m.def("smd", &smd, py::arg("treated"), py::arg("control"));
  m.def("balance_table", &balance_table, py::arg("corpus"), py::arg("assignment"),
        py::arg("pairs"), py::arg("covariates"));
  m.def("similarity_gain", &similarity_gain, py::arg("corpus"), py::arg("pairs"),
        py::arg("n_random"), py::arg("seed"));
  m.def("ranking_gap_summary", &ranking_gap_summary, py::arg("pairs"));
  m.def("classification_permutation_test", &classification_permutation_test,
        py::arg("corpus"), py::arg("pairs"), py::arg("covariates"),
        py::arg("config") = CptConfig{}, py::arg("B") = 199, py::arg("seed") = 0);

  // inference
  m.def("tabulate_pairs", &tabulate_pairs, py::arg("pairs"), py::arg("outcomes"));
  m.def("binomial_tail", &binomial_tail, py::arg("n"), py::arg("k"), py::arg("lower"),
        py::arg("p") = 0.5);
  m.def("mcnemar_exact", &mcnemar_exact, py::arg("table"));
  m.def("clopper_pearson", &clopper_pearson, py::arg("x"), py::arg("n"),
        py::arg("level") = 0.95);
  m.def("conditional_odds_ratio", &conditional_odds_ratio, py::arg("table"),
        py::arg("level") = 0.95);

  // pipeline
  m.def("run_study", &run_study, py::arg("config_json"),
        "run the full pipeline from a JSON config string and write the bundle");
  m.def("emit_plot_data",
        [](const std::filesystem::path& bundle_dir, const std::string& kind) {
          return emit_plot_data(bundle_dir, kind);
        },
        py::arg("bundle_dir"), py::arg("kind"));
}
