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

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "pairflow/corpus.hpp"

namespace pairflow {

// Costs of the two bipartite layers. The left layer (pairing quality) mixes
// embedding distance with near-exact and dose-caliper penalties; the right
// layer (group balance) mixes propensity-score gaps with fine-balance
// penalties. Penalties must dominate the base costs (which never exceed 2).
struct CostConfig {
  std::vector<std::string> near_exact_keys = {"year", "ratings"};
  double near_exact_penalty = 100.0;
  double dose_caliper = 0.0;  // 0 disables; pairs closer than this are penalized
  double caliper_penalty = 100.0;
  std::vector<std::string> fine_balance_keys = {"topic_cluster", "primary_keyword"};
  double fine_balance_penalty = 100.0;
  long long cost_scale = 1000000;  // fixed-point conversion for integer arc costs
  double ratings_tolerance = 0.0;  // elementwise slack for rating near-exactness

  void validate() const;
};

// Left-layer pairing cost: (1 - cosine similarity of embeddings) plus one
// near-exact penalty if any key differs, plus the caliper penalty when the
// ranking gap falls inside the dose caliper.
double pair_cost_delta(const SubmissionRecord& treated, const SubmissionRecord& control,
                       const CostConfig& config);

// Right-layer balance cost: |propensity difference| plus the fine-balance
// penalty per differing nominal key.
double balance_cost_Delta(const SubmissionRecord& treated, const SubmissionRecord& control,
                          const std::unordered_map<std::string, double>& scores,
                          const CostConfig& config);

// The five-layer flow network: source -> treated -> controls -> mirror
// controls -> mirror treated -> sink, with unit capacities throughout and a
// required flow equal to the treated count.
struct TripartiteNetwork {
  struct Arc {
    int from = 0;
    int to = 0;
    long long capacity = 0;
    long long cost = 0;
  };

  int num_treated = 0;
  int num_controls = 0;
  std::vector<Arc> arcs;
  long long required_flow = 0;

  int source() const { return 0; }
  int treated_node(int i) const { return 1 + i; }
  int control_node(int j) const { return 1 + num_treated + j; }
  int mirror_control_node(int j) const { return 1 + num_treated + num_controls + j; }
  int mirror_treated_node(int i) const {
    return 1 + num_treated + 2 * num_controls + i;
  }
  int sink() const { return 2 * num_treated + 2 * num_controls + 1; }
  int node_count() const { return sink() + 1; }
};

// Builds the network from already-scaled integer cost matrices (rows =
// treated, cols = controls).
TripartiteNetwork build_network_from_costs(
    const std::vector<std::vector<long long>>& delta_scaled,
    const std::vector<std::vector<long long>>& Delta_scaled);

// Computes delta/Delta from records, converts to fixed point with
// round(cost * cost_scale), and assembles the network.
TripartiteNetwork build_network(const std::vector<const SubmissionRecord*>& treated,
                                const std::vector<const SubmissionRecord*>& controls,
                                const Eigen::MatrixXd& delta, const Eigen::MatrixXd& Delta,
                                const CostConfig& config);

struct FlowSolution {
  long long total_cost = 0;
  long long flow_value = 0;
  std::vector<long long> arc_flow;  // aligned with TripartiteNetwork::arcs
};

// Exact integer min-cost flow by successive shortest augmenting paths with
// node potentials; Dijkstra ties break toward the lowest node index. Throws
// InfeasibleError (carrying the achievable flow) when required_flow cannot
// be met.
FlowSolution solve_min_cost_flow(const TripartiteNetwork& network);

// (treated index, control index) for every saturated left-layer arc, after
// checking integrality and flow conservation.
std::vector<std::pair<int, int>> extract_pair_indices(const TripartiteNetwork& network,
                                                      const FlowSolution& solution);

struct MatchedPair {
  std::string treated_id;
  std::string control_id;
  std::string stratum;
  double delta_cost = 0.0;  // unscaled left-layer cost of this pair
  double rank_gap = 0.0;    // |treated ranking - control ranking|
};

struct MatchedPairs {
  std::vector<MatchedPair> pairs;
  double total_cost = 0.0;  // unscaled network objective, summed over strata
};

// One independent network build + solve per reviewer-count stratum; pairs are
// concatenated with stratum tags. Every stratum must contain at least as many
// controls as treated.
MatchedPairs match_stratified(const Corpus& corpus, const TreatmentAssignment& assignment,
                              const std::unordered_map<std::string, double>& scores,
                              const CostConfig& config);

void write_pairs_csv(const std::filesystem::path& path, const MatchedPairs& pairs);
MatchedPairs read_pairs_csv(const std::filesystem::path& path);

}  // namespace pairflow
