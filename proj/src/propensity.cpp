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

#include "pairflow/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "pairflow/errors.hpp"

namespace pairflow {

namespace {

double sigmoid(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) {
  return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

double penalized_ll(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += y(i) * eta(i) - log1pexp(eta(i));
  }
  double penalty = 0.0;
  for (Eigen::Index j = 1; j < beta.size(); ++j) penalty += beta(j) * beta(j);
  return ll - 0.5 * ridge * penalty;
}

}  // namespace

std::string ColumnDescriptor::display_name() const {
  if (covariate == "(intercept)") return covariate;
  if (kind == CovariateKind::Nominal) return covariate + "=" + level;
  return covariate;
}

std::vector<ColumnDescriptor> EncodingSpec::columns() const {
  std::vector<ColumnDescriptor> out;
  out.push_back(ColumnDescriptor{"(intercept)", CovariateKind::Numeric, "", 0.0, 1.0});
  for (const auto& name : covariates) {
    if (covariate_kind(name) == CovariateKind::Numeric) {
      const auto& [mean, sd] = moments.at(name);
      out.push_back(ColumnDescriptor{name, CovariateKind::Numeric, "", mean, sd});
    } else {
      const auto& lv = levels.at(name);
      for (std::size_t i = 1; i < lv.size(); ++i) {  // drop the reference level
        out.push_back(ColumnDescriptor{name, CovariateKind::Nominal, lv[i], 0.0, 0.0});
      }
    }
  }
  return out;
}

namespace {

EncodingSpec fit_encoding(const std::vector<const SubmissionRecord*>& records,
                          const std::vector<std::string>& covariates) {
  if (records.empty()) throw ValidationError("encode_covariates: no records");
  EncodingSpec spec;
  spec.covariates = covariates;
  for (const auto& name : covariates) {
    if (covariate_kind(name) == CovariateKind::Nominal) {
      std::set<std::string> seen;
      for (const auto* r : records) {
        auto value = covariate_value(*r, name);
        if (!value) {
          throw ValidationError("covariate '" + name + "' undefined for record '" +
                                r->id + "'");
        }
        seen.insert(value->label);
      }
      spec.levels[name] = std::vector<std::string>(seen.begin(), seen.end());
    } else {
      double sum = 0.0;
      for (const auto* r : records) {
        auto value = covariate_value(*r, name);
        if (!value) {
          throw ValidationError("covariate '" + name + "' undefined for record '" +
                                r->id + "'");
        }
        sum += value->number;
      }
      const double mean = sum / static_cast<double>(records.size());
      double ss = 0.0;
      for (const auto* r : records) {
        const double v = covariate_value(*r, name)->number - mean;
        ss += v * v;
      }
      double sd = records.size() > 1
                      ? std::sqrt(ss / static_cast<double>(records.size() - 1))
                      : 0.0;
      // Rounding residue on a constant column must not masquerade as spread.
      if (sd <= 1e-12 * (std::abs(mean) + 1.0)) sd = 0.0;
      spec.moments[name] = {mean, sd};
    }
  }
  return spec;
}

}  // namespace

DesignMatrix encode_with(const EncodingSpec& spec,
                         const std::vector<const SubmissionRecord*>& records) {
  DesignMatrix design;
  design.encoding = spec;
  design.columns = spec.columns();
  const Eigen::Index p = static_cast<Eigen::Index>(design.columns.size());
  design.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(records.size()), p);
  design.X.col(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j) {
    const ColumnDescriptor& col = design.columns[j];
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto value = covariate_value(*records[i], col.covariate);
      if (!value) {
        throw ValidationError("covariate '" + col.covariate + "' undefined for record '" +
                              records[i]->id + "'");
      }
      if (col.kind == CovariateKind::Numeric) {
        design.X(i, j) = col.sd > 0.0 ? (value->number - col.mean) / col.sd : 0.0;
      } else {
        design.X(i, j) = value->label == col.level ? 1.0 : 0.0;
      }
    }
  }
  return design;
}

DesignMatrix encode_covariates(const std::vector<const SubmissionRecord*>& records,
                               const std::vector<std::string>& covariates) {
  return encode_with(fit_encoding(records, covariates), records);
}

DesignMatrix encode_covariates(const Corpus& corpus,
                               const std::vector<std::string>& covariates) {
  std::vector<const SubmissionRecord*> records;
  records.reserve(corpus.size());
  for (const auto& r : corpus.records) records.push_back(&r);
  return encode_covariates(records, covariates);
}

PropensityModel fit_logistic(const DesignMatrix& design, const std::vector<int>& labels,
                             double ridge, double tol, int max_iter) {
  const Eigen::Index n = design.X.rows();
  const Eigen::Index p = design.X.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("fit_logistic: label/row count mismatch");
  }
  if (ridge < 0.0) throw ConfigError("fit_logistic: ridge must be >= 0");
  long long positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("fit_logistic: labels must be 0/1");
    positives += y;
  }
  if (positives == 0 || positives == n) {
    throw ValidationError("fit_logistic: degenerate labels (all " +
                          std::to_string(positives == 0 ? 0 : 1) + ")");
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[i];

  Eigen::VectorXd ridge_diag = Eigen::VectorXd::Constant(p, ridge);
  ridge_diag(0) = 0.0;  // never penalize the intercept

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = penalized_ll(design.X, y, beta, ridge);

  PropensityModel model;
  model.ridge = ridge;
  model.columns = design.columns;
  model.encoding = design.encoding;
  model.ll_history.push_back(ll);

  for (int iter = 1; iter <= max_iter; ++iter) {
    const Eigen::VectorXd eta = design.X * beta;
    Eigen::VectorXd prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(eta(i));
      weight(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-10);
    }
    Eigen::VectorXd grad =
        design.X.transpose() * (y - prob) - ridge_diag.cwiseProduct(beta);
    if (grad.lpNorm<Eigen::Infinity>() <= tol) {
      model.beta = beta;
      model.iterations = iter - 1;
      return model;
    }
    Eigen::MatrixXd hessian = design.X.transpose() * weight.asDiagonal() * design.X;
    hessian.diagonal() += ridge_diag;
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) {
      throw NumericError("fit_logistic: singular IRLS system");
    }
    // Accept any step that does not lose more than rounding noise; gating on
    // strict improvement would stall Newton short of tight tolerances.
    const double slack = 1e-13 * (std::abs(ll) + 1.0);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double candidate_ll = penalized_ll(design.X, y, candidate, ridge);
    int halvings = 0;
    while (candidate_ll < ll - slack && halvings < 60) {
      scale *= 0.5;
      candidate = beta + scale * step;
      candidate_ll = penalized_ll(design.X, y, candidate, ridge);
      ++halvings;
    }
    beta = candidate;
    ll = candidate_ll;
    model.ll_history.push_back(ll);
  }

  // Final gradient check before giving up.
  Eigen::VectorXd prob(n);
  const Eigen::VectorXd eta = design.X * beta;
  for (Eigen::Index i = 0; i < n; ++i) prob(i) = sigmoid(eta(i));
  const Eigen::VectorXd grad =
      design.X.transpose() * (y - prob) - ridge_diag.cwiseProduct(beta);
  if (grad.lpNorm<Eigen::Infinity>() <= tol) {
    model.beta = beta;
    model.iterations = max_iter;
    return model;
  }
  throw NonConvergenceError(
      "fit_logistic: no convergence after " + std::to_string(max_iter) +
          " iterations (gradient max-norm " + std::to_string(grad.lpNorm<Eigen::Infinity>()) +
          ")",
      std::vector<double>(beta.data(), beta.data() + beta.size()));
}

Eigen::VectorXd predict(const PropensityModel& model, const DesignMatrix& design) {
  if (design.columns != model.columns) {
    throw ValidationError("predict: design columns do not match the training matrix");
  }
  Eigen::VectorXd eta = design.X * model.beta;
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    out(i) = std::clamp(sigmoid(eta(i)), 1e-15, 1.0 - 1e-15);
  }
  return out;
}

PropensityModel fit_propensity(const std::vector<const SubmissionRecord*>& records,
                               const std::vector<int>& labels,
                               const std::vector<std::string>& covariates, double ridge,
                               double tol, int max_iter) {
  return fit_logistic(encode_covariates(records, covariates), labels, ridge, tol,
                      max_iter);
}

std::vector<double> predict_scores(const PropensityModel& model,
                                   const std::vector<const SubmissionRecord*>& records) {
  const DesignMatrix design = encode_with(model.encoding, records);
  const Eigen::VectorXd scores = predict(model, design);
  return std::vector<double>(scores.data(), scores.data() + scores.size());
}

std::string export_model_json(const PropensityModel& model) {
  nlohmann::json doc;
  doc["ridge"] = model.ridge;
  doc["iterations"] = model.iterations;
  nlohmann::json coeffs = nlohmann::json::array();
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    nlohmann::json entry;
    entry["name"] = model.columns[j].display_name();
    entry["value"] = model.beta(static_cast<Eigen::Index>(j));
    coeffs.push_back(entry);
  }
  doc["coefficients"] = coeffs;
  nlohmann::json standardization = nlohmann::json::array();
  for (const auto& [name, ms] : model.encoding.moments) {
    nlohmann::json entry;
    entry["covariate"] = name;
    entry["mean"] = ms.first;
    entry["sd"] = ms.second;
    standardization.push_back(entry);
  }
  doc["standardization"] = standardization;
  nlohmann::json levels;
  for (const auto& [name, lv] : model.encoding.levels) levels[name] = lv;
  doc["levels"] = levels;
  return doc.dump(2);
}

}  // namespace pairflow
