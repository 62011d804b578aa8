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

#include "pairflow/inference.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "pairflow/errors.hpp"

namespace pairflow {

void PairedContingencyTable::validate() const {
  if (n11 < 0 || n10 < 0 || n01 < 0 || n00 < 0) {
    throw ValidationError("contingency table: negative cell count");
  }
}

PairedContingencyTable tabulate_pairs(
    const MatchedPairs& pairs, const std::unordered_map<std::string, int>& outcomes) {
  PairedContingencyTable table;
  for (const auto& pair : pairs.pairs) {
    const auto it_t = outcomes.find(pair.treated_id);
    const auto it_c = outcomes.find(pair.control_id);
    if (it_t == outcomes.end() || it_c == outcomes.end()) {
      throw ValidationError("tabulate_pairs: missing outcome for '" +
                            (it_t == outcomes.end() ? pair.treated_id : pair.control_id) +
                            "'");
    }
    if (it_t->second == 1) {
      (it_c->second == 1 ? table.n11 : table.n10) += 1;
    } else {
      (it_c->second == 1 ? table.n01 : table.n00) += 1;
    }
  }
  return table;
}

namespace {

// log of the Binomial(n, p) pmf at i.
double log_pmf(int n, int i, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
         i * std::log(p) + (n - i) * std::log1p(-p);
}

// Sum of pmf over [lo, hi] with Kahan compensation.
double pmf_sum(int n, int lo, int hi, double p) {
  double sum = 0.0;
  double carry = 0.0;
  for (int i = lo; i <= hi; ++i) {
    const double term = std::exp(log_pmf(n, i, p));
    const double t = term - carry;
    const double next = sum + t;
    carry = (next - sum) - t;
    sum = next;
  }
  return std::min(sum, 1.0);
}

}  // namespace

double binomial_tail(int n, int k, bool lower, double p) {
  if (n < 0 || k < 0 || k > n) {
    throw ConfigError("binomial_tail: k outside [0, n]");
  }
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigError("binomial_tail: p must lie in (0,1)");
  }
  // Sum whichever tail holds less mass directly; take the complement for the
  // other to keep every term addition cancellation-free.
  if (lower) {
    const double mean = n * p;
    if (k <= mean) return pmf_sum(n, 0, k, p);
    return 1.0 - pmf_sum(n, k + 1, n, p);
  }
  const double mean = n * p;
  if (k >= mean) return pmf_sum(n, k, n, p);
  return 1.0 - pmf_sum(n, 0, k - 1, p);
}

double mcnemar_exact(const PairedContingencyTable& table) {
  table.validate();
  const long long b = table.n10;
  const long long c = table.n01;
  const long long nd = b + c;
  if (nd == 0) return 1.0;
  const double lower = binomial_tail(static_cast<int>(nd), static_cast<int>(b), true);
  const double upper = binomial_tail(static_cast<int>(nd), static_cast<int>(b), false);
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

Interval clopper_pearson(int x, int n, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("clopper_pearson: level must lie in (0,1)");
  }
  if (n < 0 || x < 0 || x > n) throw ConfigError("clopper_pearson: x outside [0, n]");
  const double alpha = (1.0 - level) / 2.0;
  constexpr double kTol = 1e-10;

  Interval interval;
  if (x == 0) {
    interval.lower = 0.0;
  } else {
    // P(X >= x; n, p) increases in p; find where it crosses alpha.
    double lo = 0.0, hi = 1.0;
    while (hi - lo > kTol) {
      const double mid = 0.5 * (lo + hi);
      (binomial_tail(n, x, false, mid) < alpha ? lo : hi) = mid;
    }
    interval.lower = 0.5 * (lo + hi);
  }
  if (x == n) {
    interval.upper = 1.0;
  } else {
    // P(X <= x; n, p) decreases in p.
    double lo = 0.0, hi = 1.0;
    while (hi - lo > kTol) {
      const double mid = 0.5 * (lo + hi);
      (binomial_tail(n, x, true, mid) > alpha ? lo : hi) = mid;
    }
    interval.upper = 0.5 * (lo + hi);
  }
  return interval;
}

OddsRatioResult conditional_odds_ratio(const PairedContingencyTable& table, double level) {
  table.validate();
  const long long b = table.n10;
  const long long c = table.n01;
  if (b + c < 1) {
    throw ValidationError("conditional_odds_ratio: no discordant pairs");
  }
  OddsRatioResult result;
  result.level = level;
  result.point = c == 0 ? std::numeric_limits<double>::infinity()
                        : static_cast<double>(b) / static_cast<double>(c);
  const Interval prob = clopper_pearson(static_cast<int>(b),
                                        static_cast<int>(b + c), level);
  result.ci.lower = prob.lower / (1.0 - prob.lower);
  result.ci.upper = prob.upper >= 1.0 ? std::numeric_limits<double>::infinity()
                                      : prob.upper / (1.0 - prob.upper);
  result.note =
      "conditional odds ratio over discordant pairs; a causal reading requires "
      "the stability assumption that outcomes depend on author metadata only "
      "through the treatment-defining ranking group";
  return result;
}

namespace {

std::string fixed_decimals(double value, int decimals) {
  if (!std::isfinite(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

}  // namespace

std::string export_inference_json(const PairedContingencyTable& table, double p_value,
                                  const OddsRatioResult& odds) {
  nlohmann::json doc;
  doc["cells"] = {{"n11", table.n11}, {"n10", table.n10}, {"n01", table.n01},
                  {"n00", table.n00}};
  doc["pairs"] = table.total();
  doc["n_discordant"] = table.discordant();
  doc["p_value"] = p_value;
  doc["p_value_3dp"] = fixed_decimals(p_value, 3);
  doc["odds_ratio"] = std::isfinite(odds.point) ? nlohmann::json(odds.point)
                                                : nlohmann::json("inf");
  doc["odds_ratio_2dp"] = fixed_decimals(odds.point, 2);
  doc["ci"] = {std::isfinite(odds.ci.lower) ? nlohmann::json(odds.ci.lower)
                                            : nlohmann::json("inf"),
               std::isfinite(odds.ci.upper) ? nlohmann::json(odds.ci.upper)
                                            : nlohmann::json("inf")};
  doc["ci_2dp"] = {fixed_decimals(odds.ci.lower, 2), fixed_decimals(odds.ci.upper, 2)};
  doc["level"] = odds.level;
  doc["note"] = odds.note;
  return doc.dump(2);
}

}  // namespace pairflow
