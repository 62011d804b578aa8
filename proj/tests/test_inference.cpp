#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pairflow/errors.hpp"
#include "pairflow/inference.hpp"

using namespace pairflow;

TEST_CASE("tabulate pairs") {
  MatchedPairs pairs;
  pairs.pairs.push_back({"t0", "c0", "3", 0.0, 1.0});
  pairs.pairs.push_back({"t1", "c1", "3", 0.0, 1.0});
  std::unordered_map<std::string, int> outcomes{
      {"t0", 1}, {"c0", 1}, {"t1", 1}, {"c1", 1}};

  SUBCASE("both accepted lands in n11") {
    const auto table = tabulate_pairs(pairs, outcomes);
    CHECK(table.n11 == 2);
    CHECK(table.n10 == 0);
    CHECK(table.n01 == 0);
    CHECK(table.n00 == 0);
  }
  SUBCASE("discordant pairs split into b and c") {
    outcomes["c0"] = 0;  // (1,0) -> b
    outcomes["t1"] = 0;  // (0,1) -> c
    const auto table = tabulate_pairs(pairs, outcomes);
    CHECK(table.n10 == 1);
    CHECK(table.n01 == 1);
  }
  SUBCASE("missing outcome is an error") {
    outcomes.erase("c1");
    CHECK_THROWS_AS(tabulate_pairs(pairs, outcomes), ValidationError);
  }
  SUBCASE("planted cell recovery at the published scale") {
    MatchedPairs big;
    std::unordered_map<std::string, int> big_outcomes;
    const long long cells[4] = {633, 178, 218, 556};  // n11, b, c, n00
    int id = 0;
    auto plant = [&](int treated_outcome, int control_outcome, long long count) {
      for (long long k = 0; k < count; ++k, ++id) {
        const std::string t = "t" + std::to_string(id);
        const std::string c = "c" + std::to_string(id);
        big.pairs.push_back({t, c, "3", 0.0, 1.0});
        big_outcomes[t] = treated_outcome;
        big_outcomes[c] = control_outcome;
      }
    };
    plant(1, 1, cells[0]);
    plant(1, 0, cells[1]);
    plant(0, 1, cells[2]);
    plant(0, 0, cells[3]);
    const auto table = tabulate_pairs(big, big_outcomes);
    CHECK(table.n11 == 633);
    CHECK(table.n10 == 178);
    CHECK(table.n01 == 218);
    CHECK(table.n00 == 556);
    CHECK(table.total() == 1585);
  }
}

TEST_CASE("binomial tail") {
  CHECK(binomial_tail(3, 1, true) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(binomial_tail(2, 2, false) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK_THROWS_AS(binomial_tail(5, 6, true), ConfigError);
  CHECK_THROWS_AS(binomial_tail(5, -1, true), ConfigError);

  SUBCASE("matches the big-integer oracle across all n <= 60") {
    for (int n = 1; n <= 60; ++n) {
      for (int k = 0; k <= n; ++k) {
        const double exact_lower = oracles::binomial_tail_half_exact(n, k, true);
        const double exact_upper = oracles::binomial_tail_half_exact(n, k, false);
        CHECK(std::abs(binomial_tail(n, k, true) - exact_lower) <= 1e-12);
        CHECK(std::abs(binomial_tail(n, k, false) - exact_upper) <= 1e-12);
      }
    }
  }
  SUBCASE("spot checks at the published sample sizes") {
    CHECK(std::abs(binomial_tail(396, 178, true) -
                   oracles::binomial_tail_half_exact(396, 178, true)) <= 1e-12);
    CHECK(std::abs(binomial_tail(254, 115, true) -
                   oracles::binomial_tail_half_exact(254, 115, true)) <= 1e-12);
    CHECK(std::abs(binomial_tail(396, 200, false) -
                   oracles::binomial_tail_half_exact(396, 200, false)) <= 1e-12);
  }
  SUBCASE("general p agrees with complementation") {
    for (double p : {0.1, 0.37, 0.5, 0.82}) {
      for (int k = 0; k <= 12; ++k) {
        CHECK(binomial_tail(12, k, true, p) +
                  (k < 12 ? binomial_tail(12, k + 1, false, p) : 0.0) ==
              doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("exact McNemar test") {
  SUBCASE("published tables reproduce at three decimals") {
    PairedContingencyTable a{633, 178, 218, 556};
    CHECK(std::round(mcnemar_exact(a) * 1000.0) / 1000.0 == doctest::Approx(0.050));
    PairedContingencyTable b{443, 115, 139, 354};
    CHECK(std::round(mcnemar_exact(b) * 1000.0) / 1000.0 == doctest::Approx(0.149));
  }
  SUBCASE("balanced discordant pairs give p = 1") {
    CHECK(mcnemar_exact({0, 5, 5, 0}) == 1.0);
  }
  SUBCASE("no discordant pairs give p = 1") {
    CHECK(mcnemar_exact({10, 0, 0, 10}) == 1.0);
  }
  SUBCASE("depends only on the discordant cells") {
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 25; ++trial) {
      const long long b = static_cast<long long>(gen() % 40);
      const long long c = static_cast<long long>(gen() % 40);
      const double base = mcnemar_exact({0, b, c, 0});
      const double shifted = mcnemar_exact({static_cast<long long>(gen() % 500), b, c,
                                            static_cast<long long>(gen() % 500)});
      CHECK(base == shifted);
    }
  }
  SUBCASE("swapping b and c leaves the p-value unchanged") {
    std::mt19937_64 gen(29);
    for (int trial = 0; trial < 25; ++trial) {
      const long long b = static_cast<long long>(gen() % 60);
      const long long c = static_cast<long long>(gen() % 60);
      CHECK(mcnemar_exact({1, b, c, 1}) ==
            doctest::Approx(mcnemar_exact({1, c, b, 1})).epsilon(1e-12));
    }
  }
}

TEST_CASE("Clopper-Pearson interval") {
  SUBCASE("x = 0 closed-form boundary") {
    const Interval interval = clopper_pearson(0, 10, 0.95);
    CHECK(interval.lower == 0.0);
    CHECK(interval.upper ==
          doctest::Approx(1.0 - std::pow(0.025, 0.1)).epsilon(1e-9));
  }
  SUBCASE("x = n pins the upper end at 1") {
    const Interval interval = clopper_pearson(10, 10, 0.95);
    CHECK(interval.upper == 1.0);
    CHECK(interval.lower == doctest::Approx(std::pow(0.025, 0.1)).epsilon(1e-9));
  }
  SUBCASE("x = n/2 is symmetric about one half") {
    const Interval interval = clopper_pearson(5, 10, 0.95);
    CHECK(interval.lower == doctest::Approx(1.0 - interval.upper).epsilon(1e-9));
  }
  SUBCASE("interval endpoints invert the binomial tails") {
    // At the lower endpoint the upper tail P(X >= x) equals alpha/2; at the
    // upper endpoint the lower tail P(X <= x) equals alpha/2.
    for (const auto& [x, n] : std::vector<std::pair<int, int>>{
             {3, 12}, {7, 20}, {1, 15}, {14, 15}, {178, 396}}) {
      const Interval interval = clopper_pearson(x, n, 0.95);
      if (x > 0) {
        CHECK(binomial_tail(n, x, false, interval.lower) ==
              doctest::Approx(0.025).epsilon(1e-6));
      }
      if (x < n) {
        CHECK(binomial_tail(n, x, true, interval.upper) ==
              doctest::Approx(0.025).epsilon(1e-6));
      }
    }
  }
  SUBCASE("exhaustive small-n coverage is at least nominal") {
    for (int n = 1; n <= 20; ++n) {
      std::vector<Interval> intervals;
      for (int x = 0; x <= n; ++x) intervals.push_back(clopper_pearson(x, n, 0.95));
      for (int pct = 1; pct <= 99; ++pct) {
        const double p = pct / 100.0;
        double coverage = 0.0;
        for (int x = 0; x <= n; ++x) {
          if (intervals[x].lower <= p && p <= intervals[x].upper) {
            const double pmf =
                std::exp(std::lgamma(n + 1.0) - std::lgamma(x + 1.0) -
                         std::lgamma(n - x + 1.0)) *
                std::pow(p, x) * std::pow(1.0 - p, n - x);
            coverage += pmf;
          }
        }
        CAPTURE(n);
        CAPTURE(p);
        CHECK(coverage >= 0.95 - 1e-9);
      }
    }
  }
  SUBCASE("invalid level is rejected") {
    CHECK_THROWS_AS(clopper_pearson(1, 10, 1.0), ConfigError);
    CHECK_THROWS_AS(clopper_pearson(1, 10, 0.0), ConfigError);
  }
}

TEST_CASE("conditional odds ratio") {
  SUBCASE("published Panel A values at two decimals") {
    const OddsRatioResult result = conditional_odds_ratio({633, 178, 218, 556}, 0.95);
    CHECK(std::round(result.point * 100.0) / 100.0 == doctest::Approx(0.82));
    CHECK(std::round(result.ci.lower * 100.0) / 100.0 == doctest::Approx(0.67));
    CHECK(std::round(result.ci.upper * 100.0) / 100.0 == doctest::Approx(1.00));
  }
  SUBCASE("published Panel B values at two decimals") {
    const OddsRatioResult result = conditional_odds_ratio({443, 115, 139, 354}, 0.95);
    CHECK(std::round(result.point * 100.0) / 100.0 == doctest::Approx(0.83));
    CHECK(std::round(result.ci.lower * 100.0) / 100.0 == doctest::Approx(0.64));
    CHECK(std::round(result.ci.upper * 100.0) / 100.0 == doctest::Approx(1.07));
  }
  SUBCASE("balanced discordant pairs are symmetric on the log scale") {
    const OddsRatioResult result = conditional_odds_ratio({0, 7, 7, 0}, 0.95);
    CHECK(result.point == 1.0);
    CHECK(result.ci.lower * result.ci.upper == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("one-sided infinite endpoints instead of errors") {
    const OddsRatioResult no_c = conditional_odds_ratio({0, 5, 0, 0}, 0.95);
    CHECK(std::isinf(no_c.point));
    CHECK(std::isinf(no_c.ci.upper));
    const OddsRatioResult no_b = conditional_odds_ratio({0, 0, 5, 0}, 0.95);
    CHECK(no_b.point == 0.0);
    CHECK(no_b.ci.lower == 0.0);
    CHECK(std::isfinite(no_b.ci.upper));
  }
  SUBCASE("b = c = 0 is the only error case") {
    CHECK_THROWS_AS(conditional_odds_ratio({3, 0, 0, 4}, 0.95), ValidationError);
  }
  SUBCASE("swapping b and c inverts the odds ratio and its interval") {
    const OddsRatioResult forward = conditional_odds_ratio({0, 9, 4, 0}, 0.95);
    const OddsRatioResult backward = conditional_odds_ratio({0, 4, 9, 0}, 0.95);
    CHECK(backward.point == doctest::Approx(1.0 / forward.point).epsilon(1e-12));
    CHECK(backward.ci.lower == doctest::Approx(1.0 / forward.ci.upper).epsilon(1e-7));
    CHECK(backward.ci.upper == doctest::Approx(1.0 / forward.ci.lower).epsilon(1e-7));
  }
  SUBCASE("CI contains 1 exactly when the McNemar p-value clears the level") {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 200; ++trial) {
      const long long b = static_cast<long long>(gen() % 30);
      const long long c = static_cast<long long>(gen() % 30);
      if (b + c == 0) continue;
      const PairedContingencyTable table{0, b, c, 0};
      const double p = mcnemar_exact(table);
      if (std::abs(p - 0.05) < 1e-9) continue;  // boundary ties are convention
      const OddsRatioResult result = conditional_odds_ratio(table, 0.95);
      const bool contains_one = result.ci.lower <= 1.0 && 1.0 <= result.ci.upper;
      CAPTURE(b);
      CAPTURE(c);
      CHECK(contains_one == (p >= 0.05));
    }
  }
}

TEST_CASE("inference export shape") {
  const PairedContingencyTable table{633, 178, 218, 556};
  const double p = mcnemar_exact(table);
  const OddsRatioResult odds = conditional_odds_ratio(table, 0.95);
  const auto doc = nlohmann::json::parse(export_inference_json(table, p, odds));
  CHECK(doc.at("cells").at("n10").get<long long>() == 178);
  CHECK(doc.at("n_discordant").get<long long>() == 396);
  CHECK(doc.at("p_value_3dp").get<std::string>() == "0.050");
  CHECK(doc.at("odds_ratio_2dp").get<std::string>() == "0.82");
  CHECK(doc.at("ci_2dp")[0].get<std::string>() == "0.67");
  CHECK(doc.at("ci_2dp")[1].get<std::string>() == "1.00");
  CHECK(doc.at("level").get<double>() == 0.95);
  CHECK(!doc.at("note").get<std::string>().empty());
}
