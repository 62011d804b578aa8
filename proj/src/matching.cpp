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

#include "pairflow/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include "pairflow/covariates.hpp"
#include "pairflow/csv.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/features.hpp"

namespace pairflow {

void CostConfig::validate() const {
  constexpr double kMaxBaseCost = 2.0;  // 1 - cosine is at most 2
  if (near_exact_penalty <= kMaxBaseCost || caliper_penalty <= kMaxBaseCost ||
      fine_balance_penalty <= kMaxBaseCost) {
    throw ConfigError("cost config: penalties must exceed the maximum base cost (2)");
  }
  if (dose_caliper < 0.0) throw ConfigError("cost config: dose_caliper must be >= 0");
  if (cost_scale <= 0) throw ConfigError("cost config: cost_scale must be positive");
  if (ratings_tolerance < 0.0) {
    throw ConfigError("cost config: ratings_tolerance must be >= 0");
  }
  for (const auto& key : near_exact_keys) {
    if (key != "ratings" && !is_known_covariate(key)) {
      throw ConfigError("cost config: unknown near-exact key '" + key + "'");
    }
  }
  for (const auto& key : fine_balance_keys) {
    if (covariate_kind(key) != CovariateKind::Nominal) {
      throw ConfigError("cost config: fine-balance key '" + key + "' is not nominal");
    }
  }
}

namespace {

bool ratings_equal(const SubmissionRecord& a, const SubmissionRecord& b, double tol) {
  if (a.ratings.size() != b.ratings.size()) return false;
  for (std::size_t i = 0; i < a.ratings.size(); ++i) {
    if (std::abs(a.ratings[i] - b.ratings[i]) > tol) return false;
  }
  return true;
}

bool near_exact_key_differs(const SubmissionRecord& t, const SubmissionRecord& c,
                            const std::string& key, double ratings_tol) {
  if (key == "ratings") return !ratings_equal(t, c, ratings_tol);
  const auto vt = covariate_value(t, key);
  const auto vc = covariate_value(c, key);
  if (!vt || !vc) return vt.has_value() != vc.has_value();
  if (vt->kind == CovariateKind::Nominal) return vt->label != vc->label;
  return vt->number != vc->number;
}

}  // namespace

double pair_cost_delta(const SubmissionRecord& treated, const SubmissionRecord& control,
                       const CostConfig& config) {
  if (treated.reviewer_count() != control.reviewer_count()) {
    throw ValidationError("pair_cost_delta: reviewer-count mismatch between '" +
                          treated.id + "' and '" + control.id + "'");
  }
  double cost = 1.0 - cosine_similarity(treated.embedding, control.embedding);
  for (const auto& key : config.near_exact_keys) {
    if (near_exact_key_differs(treated, control, key, config.ratings_tolerance)) {
      cost += config.near_exact_penalty;
      break;  // one penalty if any key differs
    }
  }
  if (config.dose_caliper > 0.0) {
    const double gap =
        std::abs(treated.avg_institution_ranking - control.avg_institution_ranking);
    if (gap < config.dose_caliper) cost += config.caliper_penalty;
  }
  return cost;
}

double balance_cost_Delta(const SubmissionRecord& treated, const SubmissionRecord& control,
                          const std::unordered_map<std::string, double>& scores,
                          const CostConfig& config) {
  const auto st = scores.find(treated.id);
  const auto sc = scores.find(control.id);
  if (st == scores.end() || sc == scores.end()) {
    throw ValidationError("balance_cost_Delta: missing propensity score for '" +
                          (st == scores.end() ? treated.id : control.id) + "'");
  }
  double cost = std::abs(st->second - sc->second);
  for (const auto& key : config.fine_balance_keys) {
    const auto vt = covariate_value(treated, key);
    const auto vc = covariate_value(control, key);
    if (vt && vc && vt->label != vc->label) cost += config.fine_balance_penalty;
  }
  return cost;
}

TripartiteNetwork build_network_from_costs(
    const std::vector<std::vector<long long>>& delta_scaled,
    const std::vector<std::vector<long long>>& Delta_scaled) {
  const int num_treated = static_cast<int>(delta_scaled.size());
  if (num_treated == 0) throw ValidationError("build_network: no treated units");
  const int num_controls = static_cast<int>(delta_scaled[0].size());
  if (static_cast<int>(Delta_scaled.size()) != num_treated) {
    throw ValidationError("build_network: delta/Delta row mismatch");
  }
  if (num_controls < num_treated) {
    throw InfeasibleError("build_network: fewer controls (" +
                              std::to_string(num_controls) + ") than treated (" +
                              std::to_string(num_treated) + ")",
                          0);
  }

  TripartiteNetwork net;
  net.num_treated = num_treated;
  net.num_controls = num_controls;
  net.required_flow = num_treated;
  net.arcs.reserve(2 * num_treated + num_controls + 2 * num_treated * num_controls);

  for (int i = 0; i < num_treated; ++i) {
    net.arcs.push_back({net.source(), net.treated_node(i), 1, 0});
  }
  for (int i = 0; i < num_treated; ++i) {
    if (static_cast<int>(delta_scaled[i].size()) != num_controls) {
      throw ValidationError("build_network: ragged delta matrix");
    }
    for (int j = 0; j < num_controls; ++j) {
      const long long cost = delta_scaled[i][j];
      if (cost < 0) throw ValidationError("build_network: negative arc cost");
      net.arcs.push_back({net.treated_node(i), net.control_node(j), 1, cost});
    }
  }
  for (int j = 0; j < num_controls; ++j) {
    net.arcs.push_back({net.control_node(j), net.mirror_control_node(j), 1, 0});
  }
  for (int j = 0; j < num_controls; ++j) {
    if (static_cast<int>(Delta_scaled[0].size()) != num_controls) {
      throw ValidationError("build_network: ragged Delta matrix");
    }
    for (int i = 0; i < num_treated; ++i) {
      const long long cost = Delta_scaled[i][j];
      if (cost < 0) throw ValidationError("build_network: negative arc cost");
      net.arcs.push_back({net.mirror_control_node(j), net.mirror_treated_node(i), 1, cost});
    }
  }
  for (int i = 0; i < num_treated; ++i) {
    net.arcs.push_back({net.mirror_treated_node(i), net.sink(), 1, 0});
  }
  return net;
}

TripartiteNetwork build_network(const std::vector<const SubmissionRecord*>& treated,
                                const std::vector<const SubmissionRecord*>& controls,
                                const Eigen::MatrixXd& delta, const Eigen::MatrixXd& Delta,
                                const CostConfig& config) {
  config.validate();
  const int nt = static_cast<int>(treated.size());
  const int nc = static_cast<int>(controls.size());
  if (nt < 1) throw ValidationError("build_network: no treated units");
  if (delta.rows() != nt || delta.cols() != nc || Delta.rows() != nt ||
      Delta.cols() != nc) {
    throw ValidationError("build_network: cost matrix shape mismatch");
  }
  auto scale = [&](double cost) -> long long {
    if (!std::isfinite(cost) || cost < 0.0) {
      throw ValidationError("build_network: costs must be finite and non-negative");
    }
    return static_cast<long long>(
        std::llround(cost * static_cast<double>(config.cost_scale)));
  };
  std::vector<std::vector<long long>> delta_scaled(nt, std::vector<long long>(nc));
  std::vector<std::vector<long long>> Delta_scaled(nt, std::vector<long long>(nc));
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nc; ++j) {
      delta_scaled[i][j] = scale(delta(i, j));
      Delta_scaled[i][j] = scale(Delta(i, j));
    }
  }
  return build_network_from_costs(delta_scaled, Delta_scaled);
}

namespace {

// Residual-graph arc for the successive-shortest-path solver.
struct ResidualArc {
  int to;
  long long capacity;
  long long cost;
  int reverse;  // index of the paired arc in adjacency[to]
  int network_arc;  // original arc index, -1 for reverse arcs
};

}  // namespace

FlowSolution solve_min_cost_flow(const TripartiteNetwork& network) {
  const int n = network.node_count();
  std::vector<std::vector<ResidualArc>> graph(n);
  for (std::size_t a = 0; a < network.arcs.size(); ++a) {
    const auto& arc = network.arcs[a];
    graph[arc.from].push_back({arc.to, arc.capacity, arc.cost,
                               static_cast<int>(graph[arc.to].size()),
                               static_cast<int>(a)});
    graph[arc.to].push_back({arc.from, 0, -arc.cost,
                             static_cast<int>(graph[arc.from].size()) - 1, -1});
  }

  const int source = network.source();
  const int sink = network.sink();
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;

  std::vector<long long> potential(n, 0);  // all costs non-negative initially
  std::vector<long long> dist(n);
  std::vector<int> prev_node(n), prev_arc(n);

  FlowSolution solution;
  solution.arc_flow.assign(network.arcs.size(), 0);

  while (solution.flow_value < network.required_flow) {
    std::fill(dist.begin(), dist.end(), kInf);
    dist[source] = 0;
    // (reduced distance, node); ties fall to the lowest node index.
    using Entry = std::pair<long long, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
    queue.push({0, source});
    std::vector<bool> settled(n, false);
    while (!queue.empty()) {
      const auto [d, u] = queue.top();
      queue.pop();
      if (settled[u]) continue;
      settled[u] = true;
      for (std::size_t e = 0; e < graph[u].size(); ++e) {
        const ResidualArc& arc = graph[u][e];
        if (arc.capacity <= 0) continue;
        const long long reduced = arc.cost + potential[u] - potential[arc.to];
        if (d + reduced < dist[arc.to]) {
          dist[arc.to] = d + reduced;
          prev_node[arc.to] = u;
          prev_arc[arc.to] = static_cast<int>(e);
          queue.push({dist[arc.to], arc.to});
        }
      }
    }
    if (dist[sink] >= kInf) {
      throw InfeasibleError(
          "min-cost flow infeasible: required " + std::to_string(network.required_flow) +
              ", achievable " + std::to_string(solution.flow_value),
          solution.flow_value);
    }
    for (int v = 0; v < n; ++v) {
      potential[v] += std::min(dist[v], dist[sink]);
    }
    // Augment one unit along the shortest path (all capacities are 1).
    long long bottleneck = kInf;
    for (int v = sink; v != source; v = prev_node[v]) {
      bottleneck = std::min(bottleneck, graph[prev_node[v]][prev_arc[v]].capacity);
    }
    for (int v = sink; v != source; v = prev_node[v]) {
      ResidualArc& arc = graph[prev_node[v]][prev_arc[v]];
      arc.capacity -= bottleneck;
      graph[v][arc.reverse].capacity += bottleneck;
      if (arc.network_arc >= 0) {
        solution.arc_flow[arc.network_arc] += bottleneck;
        solution.total_cost += bottleneck * arc.cost;
      } else {
        ResidualArc& forward = graph[v][arc.reverse];
        solution.arc_flow[forward.network_arc] -= bottleneck;
        solution.total_cost -= bottleneck * forward.cost;
      }
    }
    solution.flow_value += bottleneck;
  }
  return solution;
}

std::vector<std::pair<int, int>> extract_pair_indices(const TripartiteNetwork& network,
                                                      const FlowSolution& solution) {
  if (solution.arc_flow.size() != network.arcs.size()) {
    throw ValidationError("extract_pairs: flow/arc size mismatch");
  }
  std::vector<long long> net_out(network.node_count(), 0);
  for (std::size_t a = 0; a < network.arcs.size(); ++a) {
    const auto& arc = network.arcs[a];
    const long long flow = solution.arc_flow[a];
    if (flow < 0 || flow > arc.capacity) {
      throw ValidationError("extract_pairs: arc flow outside [0, capacity]");
    }
    net_out[arc.from] += flow;
    net_out[arc.to] -= flow;
  }
  for (int v = 0; v < network.node_count(); ++v) {
    const long long expected = v == network.source()   ? solution.flow_value
                               : v == network.sink()   ? -solution.flow_value
                                                       : 0;
    if (net_out[v] != expected) {
      throw ValidationError("extract_pairs: flow conservation violated at node " +
                            std::to_string(v));
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t a = 0; a < network.arcs.size(); ++a) {
    const auto& arc = network.arcs[a];
    if (solution.arc_flow[a] == 1 && arc.from >= network.treated_node(0) &&
        arc.from <= network.treated_node(network.num_treated - 1) &&
        arc.to >= network.control_node(0) &&
        arc.to <= network.control_node(network.num_controls - 1)) {
      pairs.emplace_back(arc.from - network.treated_node(0),
                         arc.to - network.control_node(0));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

MatchedPairs match_stratified(const Corpus& corpus, const TreatmentAssignment& assignment,
                              const std::unordered_map<std::string, double>& scores,
                              const CostConfig& config) {
  config.validate();
  std::map<int, std::vector<const SubmissionRecord*>> treated_by_stratum;
  std::map<int, std::vector<const SubmissionRecord*>> controls_by_stratum;
  for (const auto& record : corpus.records) {
    auto& bucket = assignment.is_treated(record.id)
                       ? treated_by_stratum[record.reviewer_count()]
                       : controls_by_stratum[record.reviewer_count()];
    bucket.push_back(&record);
  }

  MatchedPairs result;
  for (const auto& [stratum, treated] : treated_by_stratum) {
    if (treated.empty()) continue;
    const auto it = controls_by_stratum.find(stratum);
    const auto& controls =
        it != controls_by_stratum.end()
            ? it->second
            : std::vector<const SubmissionRecord*>{};
    if (controls.size() < treated.size()) {
      throw InfeasibleError("stratum " + std::to_string(stratum) + ": " +
                                std::to_string(treated.size()) + " treated but only " +
                                std::to_string(controls.size()) + " controls",
                            0);
    }
    const int nt = static_cast<int>(treated.size());
    const int nc = static_cast<int>(controls.size());
    Eigen::MatrixXd delta(nt, nc), Delta(nt, nc);
    for (int i = 0; i < nt; ++i) {
      for (int j = 0; j < nc; ++j) {
        delta(i, j) = pair_cost_delta(*treated[i], *controls[j], config);
        Delta(i, j) = balance_cost_Delta(*treated[i], *controls[j], scores, config);
      }
    }
    const TripartiteNetwork network = build_network(treated, controls, delta, Delta, config);
    FlowSolution solution;
    try {
      solution = solve_min_cost_flow(network);
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("stratum " + std::to_string(stratum) + ": " + e.what(),
                            e.achieved_flow);
    }
    for (const auto& [i, j] : extract_pair_indices(network, solution)) {
      MatchedPair pair;
      pair.treated_id = treated[i]->id;
      pair.control_id = controls[j]->id;
      pair.stratum = std::to_string(stratum);
      pair.delta_cost = delta(i, j);
      pair.rank_gap = std::abs(treated[i]->avg_institution_ranking -
                               controls[j]->avg_institution_ranking);
      result.pairs.push_back(std::move(pair));
    }
    result.total_cost += static_cast<double>(solution.total_cost) /
                         static_cast<double>(config.cost_scale);
  }
  return result;
}

void write_pairs_csv(const std::filesystem::path& path, const MatchedPairs& pairs) {
  CsvTable table;
  table.header = {"treated_id", "control_id", "stratum", "delta_cost", "rank_gap"};
  for (const auto& pair : pairs.pairs) {
    table.rows.push_back({pair.treated_id, pair.control_id, pair.stratum,
                          format_double(pair.delta_cost), format_double(pair.rank_gap)});
  }
  write_csv(path, table);
}

MatchedPairs read_pairs_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const int col_t = table.require_column("treated_id");
  const int col_c = table.require_column("control_id");
  const int col_s = table.require_column("stratum");
  const int col_d = table.require_column("delta_cost");
  const int col_g = table.require_column("rank_gap");
  MatchedPairs pairs;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string context = "row " + std::to_string(i);
    MatchedPair pair;
    pair.treated_id = row[col_t];
    pair.control_id = row[col_c];
    pair.stratum = row[col_s];
    pair.delta_cost = parse_double(row[col_d], context);
    pair.rank_gap = parse_double(row[col_g], context);
    pairs.pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace pairflow
