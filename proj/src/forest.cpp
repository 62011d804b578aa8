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

#include "pairflow/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairflow/errors.hpp"
#include "pairflow/rng.hpp"

namespace pairflow {

namespace {

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0;  // go left when value <= threshold
  int left = -1;
  int right = -1;
  int vote = -1;  // leaf majority class; -1 for a 50/50 leaf (abstain)
};

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const std::vector<int>& y;
  const ForestConfig& config;
  int mtry;
  Rng& rng;
  std::vector<TreeNode> nodes;

  static double gini(long long pos, long long total) {
    if (total == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
  }

  // Returns the node index, or -1 when the root itself cannot split (the
  // tree then abstains from voting entirely).
  int grow(std::vector<int>& rows, int begin, int end, bool is_root) {
    const int count = end - begin;
    long long positives = 0;
    for (int i = begin; i < end; ++i) positives += y[rows[i]];

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 1e-12;
    const double parent_impurity = gini(positives, count);

    if (positives != 0 && positives != count && count >= 2 * config.min_leaf) {
      // Draw mtry distinct candidate features for this node.
      const int p = static_cast<int>(X.cols());
      std::vector<int> candidates(p);
      std::iota(candidates.begin(), candidates.end(), 0);
      for (int d = 0; d < mtry && d < p; ++d) {
        const int pick = d + rng.uniform_int(0, p - 1 - d);
        std::swap(candidates[d], candidates[pick]);
      }

      std::vector<std::pair<double, int>> column(count);
      for (int d = 0; d < mtry && d < p; ++d) {
        const int feature = candidates[d];
        for (int i = 0; i < count; ++i) {
          const int row = rows[begin + i];
          column[i] = {X(row, feature), y[row]};
        }
        std::sort(column.begin(), column.end());
        long long left_pos = 0;
        for (int i = 0; i + 1 < count; ++i) {
          left_pos += column[i].second;
          if (column[i].first == column[i + 1].first) continue;
          const int left_n = i + 1;
          const int right_n = count - left_n;
          if (left_n < config.min_leaf || right_n < config.min_leaf) continue;
          const double impurity =
              (left_n * gini(left_pos, left_n) +
               right_n * gini(positives - left_pos, right_n)) /
              count;
          const double gain = parent_impurity - impurity;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = feature;
            best_threshold = 0.5 * (column[i].first + column[i + 1].first);
          }
        }
      }
    }

    if (best_feature < 0) {
      if (is_root) return -1;
      TreeNode leaf;
      if (2 * positives > count) {
        leaf.vote = 1;
      } else if (2 * positives < count) {
        leaf.vote = 0;
      }
      nodes.push_back(leaf);
      return static_cast<int>(nodes.size()) - 1;
    }

    const int mid = static_cast<int>(
        std::partition(rows.begin() + begin, rows.begin() + end,
                       [&](int row) { return X(row, best_feature) <= best_threshold; }) -
        rows.begin());
    const int index = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{best_feature, best_threshold, -1, -1, -1});
    nodes[index].left = grow(rows, begin, mid, false);
    nodes[index].right = grow(rows, mid, end, false);
    return index;
  }

  int predict(int root, const Eigen::MatrixXd& data, int row) const {
    int node = root;
    while (nodes[node].feature >= 0) {
      node = data(row, nodes[node].feature) <= nodes[node].threshold
                 ? nodes[node].left
                 : nodes[node].right;
    }
    return nodes[node].vote;
  }
};

}  // namespace

double forest_oob_accuracy(const Eigen::MatrixXd& X, const std::vector<int>& y,
                           const ForestConfig& config, std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(y.size()) != n) {
    throw ValidationError("forest: label/row count mismatch");
  }
  if (n < 2) throw ValidationError("forest: need at least 2 rows");
  if (config.trees < 1 || config.min_leaf < 1) {
    throw ConfigError("forest: trees and min_leaf must be >= 1");
  }
  const int p = static_cast<int>(X.cols());
  const int mtry = config.mtry > 0
                       ? std::min(config.mtry, p)
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));

  const Rng root_rng(seed);
  std::vector<int> votes_pos(n, 0), votes_neg(n, 0);
  std::vector<char> in_bag(n);

  for (int t = 0; t < config.trees; ++t) {
    Rng rng = root_rng.stream("tree", static_cast<std::uint64_t>(t));
    std::fill(in_bag.begin(), in_bag.end(), 0);
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) {
      const int pick = rng.uniform_int(0, n - 1);
      rows[i] = pick;
      in_bag[pick] = 1;
    }
    TreeBuilder builder{X, y, config, mtry, rng, {}};
    const int tree_root = builder.grow(rows, 0, n, true);
    if (tree_root < 0) continue;  // degenerate tree, no information
    for (int i = 0; i < n; ++i) {
      if (in_bag[i]) continue;
      const int vote = builder.predict(tree_root, X, i);
      if (vote == 1) {
        ++votes_pos[i];
      } else if (vote == 0) {
        ++votes_neg[i];
      }
    }
  }

  double credit = 0.0;
  for (int i = 0; i < n; ++i) {
    if (votes_pos[i] == votes_neg[i]) {
      credit += 0.5;  // no usable information for this unit
    } else {
      const int predicted = votes_pos[i] > votes_neg[i] ? 1 : 0;
      credit += predicted == y[i] ? 1.0 : 0.0;
    }
  }
  return credit / static_cast<double>(n);
}

}  // namespace pairflow
