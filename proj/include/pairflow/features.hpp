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
#include <vector>

namespace pairflow {

// dot(u,v) / (|u||v|), clamped to [-1,1]. Errors on dimension mismatch and
// zero vectors.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& u,
                         const Eigen::Ref<const Eigen::VectorXd>& v);

// Symmetric matrix of pairwise cosine similarities with an exactly-unit
// diagonal.
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  int n() const { return static_cast<int>(values.rows()); }
  void validate() const;  // symmetry, unit diagonal, range
};

// Rows of E are embeddings; n >= 2, no zero rows (error names the row).
SimilarityMatrix pairwise_similarity(const Eigen::MatrixXd& embeddings);

struct ClusterAssignment {
  std::vector<int> labels;  // in [0, k)
  int k = 0;
};

// Orthonormal eigenvectors of the k smallest eigenvalues of a symmetric
// matrix (columns in ascending eigenvalue order).
Eigen::MatrixXd smallest_eigenvectors(const Eigen::MatrixXd& symmetric, int k);

struct KMeansResult {
  ClusterAssignment assignment;
  double wcss = 0.0;
  // WCSS after each Lloyd iteration of the winning restart.
  std::vector<double> wcss_history;
};

// Seeded k-means++ starts, Lloyd iterations, best of `restarts` runs by
// within-cluster sum of squares. Empty clusters are reseeded to the point
// farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int restarts = 10);

// Normalized spectral clustering: affinity max(S,0) with zero diagonal,
// symmetric normalized Laplacian (degree-1 convention for isolated nodes),
// row-normalized bottom-k eigenvectors, then k-means.
ClusterAssignment spectral_clustering(const SimilarityMatrix& similarity, int k,
                                      std::uint64_t seed);

}  // namespace pairflow
