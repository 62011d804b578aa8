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
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pairflow/corpus.hpp"
#include "pairflow/diagnostics.hpp"
#include "pairflow/inference.hpp"
#include "pairflow/matching.hpp"
#include "pairflow/propensity.hpp"

namespace pairflow {

inline constexpr const char* kVersion = "0.1.0";

// One study end to end: corpus source, borderline filter, treatment
// quantile, matching costs, propensity and diagnostics knobs, all seeded
// from a single master seed through labeled substreams.
struct StudyConfig {
  std::uint64_t master_seed = 1;
  std::filesystem::path outdir = "out";

  std::optional<std::filesystem::path> corpus_path;
  struct SyntheticBlock {
    int n = 500;
    std::optional<std::uint64_t> seed;  // defaults to the "synth" substream
    SyntheticParams params;
  };
  std::optional<SyntheticBlock> synthetic;

  double borderline_min = 5.0;
  double borderline_max = 7.0;
  std::set<int> reviewer_counts = {3, 4};

  double treatment_quantile = 0.30;

  bool cluster_enabled = false;
  int cluster_k = 10;

  CostConfig cost;

  std::vector<std::string> propensity_covariates = default_covariate_roster();
  double propensity_ridge = 1e-4;
  double propensity_tol = 1e-8;
  int propensity_max_iter = 100;

  std::vector<std::string> balance_covariates = default_covariate_roster();

  int cpt_B = 199;
  int cpt_min_pairs = 10;  // strata with fewer matched pairs skip the CPT
  CptConfig cpt;

  double inference_level = 0.95;
  int similarity_draws = 1000;

  void validate() const;
  static StudyConfig from_json(const nlohmann::json& doc);
  static StudyConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct ReportBundle {
  Corpus source_corpus;  // after synthesis / clustering, before filtering
  Corpus corpus;         // the analyzed (borderline-filtered) corpus
  TreatmentAssignment assignment;
  std::map<std::string, PropensityModel> models;  // keyed by stratum tag
  std::unordered_map<std::string, double> scores;
  MatchedPairs pairs;
  BalanceTable balance;
  std::vector<GapSummary> gaps;
  SimilarityGain similarity;
  std::map<std::string, CptResult> cpt;  // keyed by stratum tag
  PairedContingencyTable table;
  double p_value = 0.0;
  OddsRatioResult odds;
};

// Runs every stage in memory: acquire -> (cluster) -> filter -> assign ->
// fit propensity per stratum -> match per stratum -> diagnostics ->
// inference. Errors carry the failing stage name.
ReportBundle run_pipeline(const StudyConfig& config);

// Writes the full artifact set under config.outdir (fixed file names:
// balance.csv, pairs.csv, cpt_<stratum>.csv, inference.json, manifest.txt,
// plus intermediates). Files created before a failure are removed.
void write_bundle(const StudyConfig& config, const ReportBundle& bundle);

// run_pipeline + write_bundle.
ReportBundle run_and_write(const StudyConfig& config);

// Re-emits plotting data from a written bundle directory. Kinds:
// propensity-hist, similarity-hist, gap-box, cpt-hist. Returns the written
// file path.
std::filesystem::path emit_plot_data(const std::filesystem::path& bundle_dir,
                                     const std::string& kind);

// Staged entry points used by the CLI; each consumes only files written by
// earlier stages (plus the config) and writes its own artifacts.
std::filesystem::path stage_synth(const StudyConfig& config);
std::filesystem::path stage_cluster(const StudyConfig& config);
void stage_match(const StudyConfig& config);
void stage_diagnose(const StudyConfig& config);
void stage_infer(const StudyConfig& config);
void write_manifest(const StudyConfig& config);

// The corpus file the match stage reads, after optional synth/cluster stages.
std::filesystem::path effective_corpus_path(const StudyConfig& config);

}  // namespace pairflow
