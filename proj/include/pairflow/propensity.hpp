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
#include <map>
#include <string>
#include <vector>

#include "pairflow/covariates.hpp"

namespace pairflow {

struct ColumnDescriptor {
  std::string covariate;  // "(intercept)" for the leading column
  CovariateKind kind = CovariateKind::Numeric;
  std::string level;  // set for one-hot columns
  double mean = 0.0;  // numeric standardization, fitted on the training set
  double sd = 0.0;    // 0 marks a constant column (encoded as all zeros)

  bool operator==(const ColumnDescriptor&) const = default;
  std::string display_name() const;
};

// Standardization moments and nominal level sets fitted on a training set,
// reusable to encode prediction rows identically.
struct EncodingSpec {
  std::vector<std::string> covariates;
  std::map<std::string, std::vector<std::string>> levels;  // lexicographic; [0] is reference
  std::map<std::string, std::pair<double, double>> moments;  // name -> (mean, sd)

  std::vector<ColumnDescriptor> columns() const;
};

struct DesignMatrix {
  Eigen::MatrixXd X;  // intercept column first
  std::vector<ColumnDescriptor> columns;
  EncodingSpec encoding;
};

// Fits moments/levels on the given records and encodes them: intercept,
// standardized numeric columns (sample sd; constants left at zero), one-hot
// nominal columns with the lexicographically-first level dropped.
DesignMatrix encode_covariates(const std::vector<const SubmissionRecord*>& records,
                               const std::vector<std::string>& covariates);
DesignMatrix encode_covariates(const Corpus& corpus,
                               const std::vector<std::string>& covariates);

// Encodes new records with a previously fitted spec (unseen nominal levels
// map to the reference level).
DesignMatrix encode_with(const EncodingSpec& spec,
                         const std::vector<const SubmissionRecord*>& records);

struct PropensityModel {
  Eigen::VectorXd beta;
  double ridge = 0.0;
  std::vector<ColumnDescriptor> columns;
  EncodingSpec encoding;
  // Fit trace: penalized log-likelihood after every accepted step.
  std::vector<double> ll_history;
  int iterations = 0;
};

// Penalized logistic regression via iteratively-reweighted least squares with
// step-halving. The ridge penalty (ridge/2)*|beta|^2 skips the intercept.
// Converges when the gradient max-norm drops to `tol`; throws
// NonConvergenceError (carrying the last iterate) after max_iter.
PropensityModel fit_logistic(const DesignMatrix& design, const std::vector<int>& labels,
                             double ridge = 1e-4, double tol = 1e-8, int max_iter = 100);

// sigma(X beta) per row, in (0,1). The design must carry the same column
// descriptors the model was trained with.
Eigen::VectorXd predict(const PropensityModel& model, const DesignMatrix& design);

// Convenience: encode + fit, and predict straight from records.
PropensityModel fit_propensity(const std::vector<const SubmissionRecord*>& records,
                               const std::vector<int>& labels,
                               const std::vector<std::string>& covariates,
                               double ridge = 1e-4, double tol = 1e-8, int max_iter = 100);
std::vector<double> predict_scores(const PropensityModel& model,
                                   const std::vector<const SubmissionRecord*>& records);

// Structured-text export of coefficients and standardization parameters.
std::string export_model_json(const PropensityModel& model);

}  // namespace pairflow
