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

#include "pairflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pairflow/errors.hpp"
#include "pairflow/rng.hpp"

namespace pairflow {

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine_similarity: dimension mismatch (" +
                          std::to_string(u.size()) + " vs " + std::to_string(v.size()) +
                          ")");
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    throw ValidationError("cosine_similarity: zero vector");
  }
  if (u == v) return 1.0;  // keep identical vectors exactly at 1
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  const Eigen::Map<const Eigen::VectorXd> mu(u.data(), u.size());
  const Eigen::Map<const Eigen::VectorXd> mv(v.data(), v.size());
  return cosine_similarity(Eigen::Ref<const Eigen::VectorXd>(mu),
                           Eigen::Ref<const Eigen::VectorXd>(mv));
}

void SimilarityMatrix::validate() const {
  if (values.rows() != values.cols()) {
    throw ValidationError("similarity matrix must be square");
  }
  for (int i = 0; i < values.rows(); ++i) {
    if (values(i, i) != 1.0) throw ValidationError("similarity diagonal must be 1");
    for (int j = 0; j < i; ++j) {
      if (values(i, j) != values(j, i)) {
        throw ValidationError("similarity matrix must be exactly symmetric");
      }
      if (values(i, j) < -1.0 || values(i, j) > 1.0) {
        throw ValidationError("similarity entries must lie in [-1,1]");
      }
    }
  }
}

SimilarityMatrix pairwise_similarity(const Eigen::MatrixXd& embeddings) {
  const int n = static_cast<int>(embeddings.rows());
  if (n < 2) throw ValidationError("pairwise_similarity: need at least 2 rows");
  for (int i = 0; i < n; ++i) {
    if (embeddings.row(i).norm() == 0.0) {
      throw ValidationError("pairwise_similarity: zero row at index " + std::to_string(i));
    }
  }
  SimilarityMatrix sim;
  sim.values = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const double value = cosine_similarity(embeddings.row(i).transpose(),
                                             embeddings.row(j).transpose());
      sim.values(i, j) = value;
      sim.values(j, i) = value;
    }
  }
  return sim;
}

Eigen::MatrixXd smallest_eigenvectors(const Eigen::MatrixXd& symmetric, int k) {
  const int n = static_cast<int>(symmetric.rows());
  if (symmetric.cols() != n) throw ValidationError("smallest_eigenvectors: not square");
  if (k < 1 || k > n) throw ConfigError("smallest_eigenvectors: k out of [1, n]");
  const double scale = std::max(1.0, symmetric.cwiseAbs().maxCoeff());
  if ((symmetric - symmetric.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ValidationError("smallest_eigenvectors: matrix not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (symmetric + symmetric.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericError("smallest_eigenvectors: eigendecomposition failed");
  }
  return solver.eigenvectors().leftCols(k);
}

namespace {

double assign_points(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                     std::vector<int>& labels) {
  const int n = static_cast<int>(points.rows());
  const int k = static_cast<int>(centroids.rows());
  double wcss = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < k; ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    wcss += best;
  }
  return wcss;
}

Eigen::MatrixXd kmeans_pp_init(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(rng.uniform_int(0, n - 1));
  std::vector<double> dist2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) {
        best = std::min(best, (points.row(i) - centroids.row(j)).squaredNorm());
      }
      dist2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All points coincide with chosen centroids; any pick works.
      centroids.row(c) = points.row(rng.uniform_int(0, n - 1));
      continue;
    }
    double target = rng.uniform() * total;
    int pick = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += dist2[i];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int restarts) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (k > n) throw ConfigError("kmeans: k exceeds point count");
  if (restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");

  const Rng root(seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < restarts; ++restart) {
    Rng rng = root.stream("kmeans", static_cast<std::uint64_t>(restart));
    Eigen::MatrixXd centroids = kmeans_pp_init(points, k, rng);
    std::vector<int> labels(n, 0);
    std::vector<int> prev_labels;
    std::vector<double> history;
    double wcss = assign_points(points, centroids, labels);
    for (int iter = 0; iter < 100; ++iter) {
      // Recompute centroids.
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += points.row(i);
        ++counts[labels[i]];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) {
          centroids.row(c) = sums.row(c) / counts[c];
        } else {
          // Reseed an empty cluster at the point farthest from its centroid.
          int farthest = 0;
          double far_d = -1.0;
          for (int i = 0; i < n; ++i) {
            const double d = (points.row(i) - centroids.row(labels[i])).squaredNorm();
            if (d > far_d) {
              far_d = d;
              farthest = i;
            }
          }
          centroids.row(c) = points.row(farthest);
        }
      }
      prev_labels = labels;
      wcss = assign_points(points, centroids, labels);
      history.push_back(wcss);
      if (labels == prev_labels) break;
    }
    if (wcss < best.wcss) {
      best.wcss = wcss;
      best.assignment.labels = labels;
      best.assignment.k = k;
      best.wcss_history = std::move(history);
    }
  }
  return best;
}

ClusterAssignment spectral_clustering(const SimilarityMatrix& similarity, int k,
                                      std::uint64_t seed) {
  similarity.validate();
  const int n = similarity.n();
  if (k < 1 || k > n) throw ConfigError("spectral_clustering: k out of [1, n]");
  if (k == 1) return ClusterAssignment{std::vector<int>(n, 0), 1};

  Eigen::MatrixXd affinity = similarity.values.cwiseMax(0.0);
  affinity.diagonal().setZero();
  if (affinity.maxCoeff() <= 0.0) {
    throw ValidationError("spectral_clustering: all-zero affinity");
  }

  Eigen::VectorXd degree = affinity.rowwise().sum();
  for (int i = 0; i < n; ++i) {
    if (degree(i) <= 0.0) degree(i) = 1.0;  // isolated-node convention
  }
  const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  Eigen::MatrixXd laplacian =
      Eigen::MatrixXd::Identity(n, n) -
      (inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
  laplacian = 0.5 * (laplacian + laplacian.transpose());

  Eigen::MatrixXd basis = smallest_eigenvectors(laplacian, k);
  for (int i = 0; i < n; ++i) {
    const double norm = basis.row(i).norm();
    if (norm > 1e-12) basis.row(i) /= norm;
  }
  return kmeans(basis, k, seed, 10).assignment;
}

}  // namespace pairflow
