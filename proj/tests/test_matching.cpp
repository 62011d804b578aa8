#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/matching.hpp"

using namespace pairflow;

namespace {

SubmissionRecord match_record(const std::string& id, int year,
                              std::vector<double> ratings,
                              std::vector<double> embedding, double ranking,
                              const std::string& topic = "t0",
                              const std::string& keyword = "NA") {
  SubmissionRecord r;
  r.id = id;
  r.year = year;
  r.ratings = std::move(ratings);
  r.sentiments.assign(r.ratings.size(), 0.5);
  sort_ratings_descending(r);
  r.num_authors = 3;
  r.num_figures = 10;
  r.num_references = 40;
  r.num_sections = 20;
  r.complexity = 0.8;
  r.topic_cluster = topic;
  r.primary_keyword = keyword;
  r.avg_institution_ranking = ranking;
  r.embedding = std::move(embedding);
  r.outcome = 0;
  return r;
}

}  // namespace

TEST_CASE("pair cost delta") {
  CostConfig cfg;
  const auto treated = match_record("t", 2020, {6, 5, 5}, {1, 0}, 10);

  SUBCASE("identical keys and embeddings cost zero") {
    const auto control = match_record("c", 2020, {6, 5, 5}, {1, 0}, 300);
    CHECK(pair_cost_delta(treated, control, cfg) == doctest::Approx(0.0));
  }
  SUBCASE("year difference forces the near-exact penalty") {
    const auto control = match_record("c", 2021, {6, 5, 5}, {1, 0}, 300);
    CHECK(pair_cost_delta(treated, control, cfg) ==
          doctest::Approx(cfg.near_exact_penalty));
  }
  SUBCASE("rating difference forces the near-exact penalty once") {
    const auto control = match_record("c", 2020, {6, 5, 4}, {1, 0}, 300);
    CHECK(pair_cost_delta(treated, control, cfg) ==
          doctest::Approx(cfg.near_exact_penalty));
    const auto both = match_record("c2", 2021, {6, 5, 4}, {1, 0}, 300);
    CHECK(pair_cost_delta(treated, both, cfg) ==
          doctest::Approx(cfg.near_exact_penalty));  // still one penalty
  }
  SUBCASE("caliper penalizes close ranking gaps") {
    CostConfig caliper_cfg = cfg;
    caliper_cfg.dose_caliper = 80.0;
    const auto control = match_record("c", 2020, {6, 5, 5}, {0, 1}, 60);  // gap 50
    CHECK(pair_cost_delta(treated, control, caliper_cfg) ==
          doctest::Approx(1.0 + caliper_cfg.caliper_penalty));
    const auto far_control = match_record("c2", 2020, {6, 5, 5}, {0, 1}, 95);  // gap 85
    CHECK(pair_cost_delta(treated, far_control, caliper_cfg) == doctest::Approx(1.0));
  }
  SUBCASE("reviewer-count mismatch is an error") {
    const auto control = match_record("c", 2020, {6, 5, 5, 4}, {1, 0}, 300);
    CHECK_THROWS_AS(pair_cost_delta(treated, control, cfg), ValidationError);
  }
  SUBCASE("ratings tolerance knob") {
    CostConfig tol_cfg = cfg;
    tol_cfg.ratings_tolerance = 0.5;
    const auto control = match_record("c", 2020, {6.4, 5.2, 5.0}, {1, 0}, 300);
    CHECK(pair_cost_delta(treated, control, tol_cfg) < 1e-9);
  }
}

TEST_CASE("balance cost Delta") {
  CostConfig cfg;
  const auto treated = match_record("t", 2020, {6, 5, 5}, {1, 0}, 10, "t1", "kw1");
  const auto control = match_record("c", 2020, {6, 5, 5}, {1, 0}, 300, "t1", "kw1");
  std::unordered_map<std::string, double> scores{{"t", 0.8}, {"c", 0.3}};

  SUBCASE("equal scores and categories cost zero") {
    scores["t"] = scores["c"] = 0.5;
    CHECK(balance_cost_Delta(treated, control, scores, cfg) == doctest::Approx(0.0));
  }
  SUBCASE("score gap enters directly") {
    CHECK(balance_cost_Delta(treated, control, scores, cfg) == doctest::Approx(0.5));
  }
  SUBCASE("each differing fine-balance key adds one penalty") {
    auto other = control;
    other.topic_cluster = "t9";
    other.primary_keyword = "kw9";
    scores["t"] = scores["c"] = 0.5;
    CHECK(balance_cost_Delta(treated, other, scores, cfg) ==
          doctest::Approx(2.0 * cfg.fine_balance_penalty));
  }
  SUBCASE("missing score is an error") {
    scores.erase("c");
    CHECK_THROWS_AS(balance_cost_Delta(treated, control, scores, cfg), ValidationError);
  }
}

TEST_CASE("network layout") {
  SUBCASE("minimal 1x1 network has five arcs and unit flow") {
    const TripartiteNetwork net = build_network_from_costs({{7}}, {{3}});
    CHECK(net.arcs.size() == 5);
    CHECK(net.required_flow == 1);
    const FlowSolution sol = solve_min_cost_flow(net);
    CHECK(sol.total_cost == 10);
    CHECK(extract_pair_indices(net, sol) ==
          std::vector<std::pair<int, int>>{{0, 0}});
  }
  SUBCASE("3x5 network has the 3+15+5+15+3 arc layout") {
    std::vector<std::vector<long long>> delta(3, std::vector<long long>(5, 1));
    const TripartiteNetwork net = build_network_from_costs(delta, delta);
    CHECK(net.arcs.size() == 3 + 15 + 5 + 15 + 3);
    CHECK(net.node_count() == 2 + 3 + 5 + 5 + 3);
  }
  SUBCASE("fixed-point scaling: cost 0.5 at scale 1e6 becomes 500000") {
    const auto treated = match_record("t", 2020, {6, 5, 5}, {1, 0}, 10);
    const auto control = match_record("c", 2020, {6, 5, 5}, {1, 0}, 300);
    Eigen::MatrixXd delta(1, 1), Delta(1, 1);
    delta << 0.5;
    Delta << 0.0;
    CostConfig cfg;
    const TripartiteNetwork net =
        build_network({&treated}, {&control}, delta, Delta, cfg);
    long long cost = -1;
    for (const auto& arc : net.arcs) {
      if (arc.from == net.treated_node(0) && arc.to == net.control_node(0)) {
        cost = arc.cost;
      }
    }
    CHECK(cost == 500000);
  }
  SUBCASE("fewer controls than treated is infeasible") {
    std::vector<std::vector<long long>> delta(2, std::vector<long long>(1, 0));
    CHECK_THROWS_AS(build_network_from_costs(delta, delta), InfeasibleError);
  }
}

TEST_CASE("min-cost flow solver") {
  SUBCASE("2x2 unique optimum picks the diagonal") {
    const TripartiteNetwork net =
        build_network_from_costs({{0, 10}, {10, 0}}, {{0, 0}, {0, 0}});
    const FlowSolution sol = solve_min_cost_flow(net);
    CHECK(sol.total_cost == 0);
    CHECK(extract_pair_indices(net, sol) ==
          std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  }
  SUBCASE("matches the brute-force oracle on random instances") {
    std::mt19937_64 gen(2024);
    for (int trial = 0; trial < 60; ++trial) {
      const int nt = 1 + static_cast<int>(gen() % 5);
      const int nc = nt + static_cast<int>(gen() % (8 - nt + 1));
      std::vector<std::vector<long long>> delta(nt, std::vector<long long>(nc));
      std::vector<std::vector<long long>> Delta(nt, std::vector<long long>(nc));
      for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < nc; ++j) {
          delta[i][j] = static_cast<long long>(gen() % 101);
          Delta[i][j] = static_cast<long long>(gen() % 101);
        }
      }
      const TripartiteNetwork net = build_network_from_costs(delta, Delta);
      const FlowSolution sol = solve_min_cost_flow(net);
      CAPTURE(trial);
      CHECK(sol.total_cost == oracles::brute_force_tripartite(delta, Delta));
      // The left layer must be a perfect matching of treated onto distinct
      // controls.
      const auto pairs = extract_pair_indices(net, sol);
      REQUIRE(static_cast<int>(pairs.size()) == nt);
      std::set<int> used;
      for (const auto& [i, j] : pairs) used.insert(j);
      CHECK(static_cast<int>(used.size()) == nt);
    }
  }
  SUBCASE("deterministic across re-solves") {
    std::mt19937_64 gen(7);
    std::vector<std::vector<long long>> delta(4, std::vector<long long>(6));
    std::vector<std::vector<long long>> Delta(4, std::vector<long long>(6));
    for (auto& row : delta) {
      for (auto& v : row) v = static_cast<long long>(gen() % 50);
    }
    for (auto& row : Delta) {
      for (auto& v : row) v = static_cast<long long>(gen() % 50);
    }
    const TripartiteNetwork net = build_network_from_costs(delta, Delta);
    const auto first = extract_pair_indices(net, solve_min_cost_flow(net));
    const auto second = extract_pair_indices(net, solve_min_cost_flow(net));
    CHECK(first == second);
  }
}

namespace {

struct PlantedCorpus {
  Corpus corpus;
  TreatmentAssignment assignment;
  std::unordered_map<std::string, double> scores;
};

// nt treated plus controls containing near-clones of each treated unit and
// decoys; every unit shares year/ratings so near-exact never binds.
PlantedCorpus planted(std::mt19937_64& gen, int nt, int decoys) {
  PlantedCorpus out;
  out.corpus.embedding_dim = 2;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const std::vector<std::string> topics = {"a", "b", "c"};
  const std::vector<std::string> keywords = {"NA", "k1"};
  auto topic_at = [&](int i) { return topics[i % topics.size()]; };
  auto keyword_at = [&](int i) { return keywords[i % keywords.size()]; };
  for (int i = 0; i < nt; ++i) {
    auto r = match_record("t" + std::to_string(i), 2020, {6, 5, 5},
                          {uniform(gen), 1.0}, 10.0 + i, topic_at(i), keyword_at(i));
    out.corpus.records.push_back(r);
    out.assignment.treated_ids.push_back(r.id);
    out.scores[r.id] = 0.5;
  }
  // Count-matching clones.
  for (int i = 0; i < nt; ++i) {
    auto r = match_record("clone" + std::to_string(i), 2020, {6, 5, 5},
                          {uniform(gen), 1.0}, 200.0 + i, topic_at(i), keyword_at(i));
    out.corpus.records.push_back(r);
    out.assignment.control_ids.push_back(r.id);
    out.scores[r.id] = 0.5;
  }
  // Decoys from a category outside the treated distribution.
  for (int i = 0; i < decoys; ++i) {
    auto r = match_record("decoy" + std::to_string(i), 2020, {6, 5, 5},
                          {uniform(gen), 1.0}, 300.0 + i, "decoy_topic", "decoy_kw");
    out.corpus.records.push_back(r);
    out.assignment.control_ids.push_back(r.id);
    out.scores[r.id] = 0.5;
  }
  std::sort(out.assignment.treated_ids.begin(), out.assignment.treated_ids.end());
  std::sort(out.assignment.control_ids.begin(), out.assignment.control_ids.end());
  return out;
}

}  // namespace

TEST_CASE("fine balance recovers treated category counts when possible") {
  std::mt19937_64 gen(99);
  CostConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    PlantedCorpus planted_case = planted(gen, 3 + static_cast<int>(gen() % 4),
                                         2 + static_cast<int>(gen() % 4));
    const MatchedPairs pairs = match_stratified(
        planted_case.corpus, planted_case.assignment, planted_case.scores, cfg);
    std::map<std::pair<std::string, std::string>, int> treated_counts, matched_counts;
    const auto index = planted_case.corpus.id_index();
    for (const auto& pair : pairs.pairs) {
      const auto& t = planted_case.corpus.records[index.at(pair.treated_id)];
      const auto& c = planted_case.corpus.records[index.at(pair.control_id)];
      ++treated_counts[{t.topic_cluster, t.primary_keyword}];
      ++matched_counts[{c.topic_cluster, c.primary_keyword}];
    }
    CAPTURE(trial);
    CHECK(treated_counts == matched_counts);
  }
}

TEST_CASE("near-exact feasibility: planted perfect assignment incurs no penalty") {
  std::mt19937_64 gen(123);
  CostConfig cfg;
  PlantedCorpus planted_case = planted(gen, 5, 3);
  // Shift decoy years so they would incur the near-exact penalty.
  for (auto& record : planted_case.corpus.records) {
    if (record.id.rfind("decoy", 0) == 0) record.year = 2021;
  }
  const MatchedPairs pairs = match_stratified(planted_case.corpus,
                                              planted_case.assignment,
                                              planted_case.scores, cfg);
  for (const auto& pair : pairs.pairs) {
    CHECK(pair.delta_cost < cfg.near_exact_penalty);
  }
}

TEST_CASE("stratified matching") {
  std::mt19937_64 gen(55);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Corpus corpus;
  corpus.embedding_dim = 2;
  TreatmentAssignment assignment;
  std::unordered_map<std::string, double> scores;
  auto add = [&](const std::string& id, int reviewers, bool treated) {
    std::vector<double> ratings(reviewers, 6.0);
    auto r = match_record(id, 2020, ratings, {uniform(gen), 1.0},
                          treated ? 10.0 + uniform(gen) : 100.0 + uniform(gen));
    corpus.records.push_back(r);
    (treated ? assignment.treated_ids : assignment.control_ids).push_back(id);
    scores[id] = 0.5;
  };
  for (int i = 0; i < 3; ++i) add("t3_" + std::to_string(i), 3, true);
  for (int i = 0; i < 6; ++i) add("c3_" + std::to_string(i), 3, false);
  for (int i = 0; i < 2; ++i) add("t4_" + std::to_string(i), 4, true);
  for (int i = 0; i < 5; ++i) add("c4_" + std::to_string(i), 4, false);
  std::sort(assignment.treated_ids.begin(), assignment.treated_ids.end());
  std::sort(assignment.control_ids.begin(), assignment.control_ids.end());

  SUBCASE("pair counts add up per stratum and ids stay unique") {
    const MatchedPairs pairs = match_stratified(corpus, assignment, scores, CostConfig{});
    CHECK(pairs.pairs.size() == 5);
    int three = 0, four = 0;
    std::set<std::string> seen;
    for (const auto& pair : pairs.pairs) {
      (pair.stratum == "3" ? three : four) += 1;
      CHECK(seen.insert(pair.treated_id).second);
      CHECK(seen.insert(pair.control_id).second);
    }
    CHECK(three == 3);
    CHECK(four == 2);
  }
  SUBCASE("single-stratum corpus yields a single-stratum result") {
    Corpus only3 = corpus;
    only3.records.erase(
        std::remove_if(only3.records.begin(), only3.records.end(),
                       [](const SubmissionRecord& r) { return r.reviewer_count() == 4; }),
        only3.records.end());
    const MatchedPairs pairs = match_stratified(only3, assignment, scores, CostConfig{});
    for (const auto& pair : pairs.pairs) CHECK(pair.stratum == "3");
  }
  SUBCASE("an undersized stratum reports infeasibility") {
    for (int i = 0; i < 4; ++i) {
      add("t4_extra_" + std::to_string(i), 4, true);
    }
    std::sort(assignment.treated_ids.begin(), assignment.treated_ids.end());
    CHECK_THROWS_WITH_AS(match_stratified(corpus, assignment, scores, CostConfig{}),
                         doctest::Contains("stratum 4"), InfeasibleError);
  }
  SUBCASE("matched pairs re-solve identically") {
    const MatchedPairs first = match_stratified(corpus, assignment, scores, CostConfig{});
    const MatchedPairs second = match_stratified(corpus, assignment, scores, CostConfig{});
    REQUIRE(first.pairs.size() == second.pairs.size());
    for (std::size_t i = 0; i < first.pairs.size(); ++i) {
      CHECK(first.pairs[i].treated_id == second.pairs[i].treated_id);
      CHECK(first.pairs[i].control_id == second.pairs[i].control_id);
    }
  }
}

TEST_CASE("dose caliper keeps feasible pairs apart") {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  CostConfig cfg;
  cfg.dose_caliper = 80.0;
  for (int trial = 0; trial < 20; ++trial) {
    Corpus corpus;
    corpus.embedding_dim = 2;
    TreatmentAssignment assignment;
    std::unordered_map<std::string, double> scores;
    const int nt = 3 + static_cast<int>(gen() % 3);
    for (int i = 0; i < nt; ++i) {
      const double rank = 1.0 + 40.0 * uniform(gen);
      auto r = match_record("t" + std::to_string(i), 2020, {6, 5, 5},
                            {uniform(gen), 1.0}, rank);
      corpus.records.push_back(r);
      assignment.treated_ids.push_back(r.id);
      scores[r.id] = 0.5;
      // A feasible far partner...
      auto far = match_record("far" + std::to_string(i), 2020, {6, 5, 5},
                              {uniform(gen), 1.0}, rank + 80.0 + 50.0 * uniform(gen));
      corpus.records.push_back(far);
      assignment.control_ids.push_back(far.id);
      scores[far.id] = 0.5;
      // ...and a tempting near decoy with an identical embedding.
      auto near = match_record("near" + std::to_string(i), 2020, {6, 5, 5},
                               r.embedding, rank + 30.0 * uniform(gen));
      corpus.records.push_back(near);
      assignment.control_ids.push_back(near.id);
      scores[near.id] = 0.5;
    }
    std::sort(assignment.treated_ids.begin(), assignment.treated_ids.end());
    std::sort(assignment.control_ids.begin(), assignment.control_ids.end());
    const MatchedPairs pairs = match_stratified(corpus, assignment, scores, cfg);
    CAPTURE(trial);
    for (const auto& pair : pairs.pairs) CHECK(pair.rank_gap >= 80.0);
  }
}

TEST_CASE("cost config validation") {
  CostConfig cfg;
  cfg.near_exact_penalty = 1.5;  // below the maximum base cost
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = CostConfig{};
  cfg.cost_scale = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = CostConfig{};
  cfg.fine_balance_keys = {"complexity"};  // numeric, not nominal
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pairs csv round trip") {
  MatchedPairs pairs;
  pairs.pairs.push_back({"t0", "c0", "3", 0.25, 120.5});
  pairs.pairs.push_back({"t1", "c1", "4", 1.5, 80.0});
  const auto path = std::filesystem::temp_directory_path() / "pairflow_pairs.csv";
  write_pairs_csv(path, pairs);
  const MatchedPairs loaded = read_pairs_csv(path);
  REQUIRE(loaded.pairs.size() == 2);
  CHECK(loaded.pairs[0].treated_id == "t0");
  CHECK(loaded.pairs[0].delta_cost == 0.25);
  CHECK(loaded.pairs[1].rank_gap == 80.0);
  std::filesystem::remove(path);
}
