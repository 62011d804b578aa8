#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pairflow/errors.hpp"
#include "pairflow/propensity.hpp"

using namespace pairflow;

namespace {

SubmissionRecord covariate_record(const std::string& id, double complexity,
                                  const std::string& topic) {
  SubmissionRecord r;
  r.id = id;
  r.year = 2020;
  r.ratings = {6, 6, 6};
  r.sentiments = {0.5, 0.5, 0.5};
  r.complexity = complexity;
  r.topic_cluster = topic;
  r.primary_keyword = "NA";
  r.avg_institution_ranking = 10.0;
  r.embedding = {1.0, 0.0};
  return r;
}

// Fresh implementation of the penalized objective, used only by the oracle.
double oracle_objective(const Eigen::MatrixXd& X, const std::vector<int>& y,
                        const Eigen::VectorXd& beta, double ridge) {
  double value = 0.0;
  const Eigen::VectorXd eta = X * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // y*eta - log(1 + exp(eta)), rewritten with log1p for stability.
    const double stable =
        std::max(eta(i), 0.0) + std::log1p(std::exp(-std::abs(eta(i))));
    value += y[i] * eta(i) - stable;
  }
  for (Eigen::Index j = 1; j < beta.size(); ++j) {
    value -= 0.5 * ridge * beta(j) * beta(j);
  }
  return value;
}

// Numeric maximizer of the same objective: damped Newton steps built from
// central finite differences. Independent of the IRLS code path.
Eigen::VectorXd finite_difference_newton(const Eigen::MatrixXd& X,
                                         const std::vector<int>& y, double ridge) {
  const Eigen::Index p = X.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double h = 1e-5;
  for (int iter = 0; iter < 400; ++iter) {
    Eigen::VectorXd grad(p);
    Eigen::MatrixXd hess(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
      Eigen::VectorXd up = beta, down = beta;
      up(a) += h;
      down(a) -= h;
      grad(a) = (oracle_objective(X, y, up, ridge) -
                 oracle_objective(X, y, down, ridge)) /
                (2 * h);
    }
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b) {
        Eigen::VectorXd pp = beta, pm = beta, mp = beta, mm = beta;
        pp(a) += h; pp(b) += h;
        pm(a) += h; pm(b) -= h;
        mp(a) -= h; mp(b) += h;
        mm(a) -= h; mm(b) -= h;
        const double second = (oracle_objective(X, y, pp, ridge) -
                               oracle_objective(X, y, pm, ridge) -
                               oracle_objective(X, y, mp, ridge) +
                               oracle_objective(X, y, mm, ridge)) /
                              (4 * h * h);
        hess(a, b) = second;
        hess(b, a) = second;
      }
    }
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
    Eigen::VectorXd step = (-hess).ldlt().solve(grad);
    // Damp until the objective does not decrease.
    double scale = 1.0;
    const double before = oracle_objective(X, y, beta, ridge);
    while (scale > 1e-8 &&
           oracle_objective(X, y, beta + scale * step, ridge) < before) {
      scale *= 0.5;
    }
    beta += scale * step;
  }
  return beta;
}

DesignMatrix raw_design(const Eigen::MatrixXd& features) {
  DesignMatrix design;
  design.X = Eigen::MatrixXd::Ones(features.rows(), features.cols() + 1);
  design.X.rightCols(features.cols()) = features;
  design.columns.assign(static_cast<std::size_t>(features.cols()) + 1,
                        ColumnDescriptor{});
  return design;
}

}  // namespace

TEST_CASE("covariate encoding") {
  std::vector<SubmissionRecord> records = {covariate_record("a", 0.2, "t0"),
                                           covariate_record("b", 0.5, "t1"),
                                           covariate_record("c", 0.8, "t2")};
  std::vector<const SubmissionRecord*> ptrs{&records[0], &records[1], &records[2]};

  SUBCASE("numeric covariate standardizes to mean 0, sd 1") {
    const DesignMatrix design = encode_covariates(ptrs, {"complexity"});
    REQUIRE(design.X.cols() == 2);
    CHECK(design.X.col(0) == Eigen::VectorXd::Ones(3));
    CHECK(design.X.col(1).mean() == doctest::Approx(0.0).epsilon(1e-12));
    const double sd = std::sqrt(design.X.col(1).squaredNorm() / 2.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("nominal covariate drops the reference level") {
    const DesignMatrix design = encode_covariates(ptrs, {"topic_cluster"});
    REQUIRE(design.X.cols() == 3);  // intercept + 2 indicators (t1, t2)
    CHECK(design.columns[1].level == "t1");
    CHECK(design.columns[2].level == "t2");
    CHECK(design.X(0, 1) == 0.0);
    CHECK(design.X(1, 1) == 1.0);
    CHECK(design.X(2, 2) == 1.0);
  }
  SUBCASE("constant numeric column is left at zero") {
    records[1].complexity = records[0].complexity = records[2].complexity = 0.4;
    const DesignMatrix design = encode_covariates(ptrs, {"complexity"});
    CHECK(design.X.col(1).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("unknown covariate is rejected") {
    CHECK_THROWS_AS(encode_covariates(ptrs, {"nope"}), ConfigError);
  }
  SUBCASE("year is treated as nominal") {
    records[2].year = 2021;
    const DesignMatrix design = encode_covariates(ptrs, {"year"});
    REQUIRE(design.X.cols() == 2);  // intercept + indicator for 2021
    CHECK(design.columns[1].level == "2021");
  }
}

TEST_CASE("logistic fit") {
  SUBCASE("intercept-only fit matches the closed form") {
    DesignMatrix design = raw_design(Eigen::MatrixXd(10, 0));
    std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    const PropensityModel model = fit_logistic(design, y, 0.0, 1e-10, 100);
    CHECK(model.beta(0) ==
          doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-10));
  }
  SUBCASE("symmetric feature gets coefficient zero") {
    Eigen::MatrixXd features(8, 1);
    features << 1, -1, 1, -1, 1, -1, 1, -1;
    std::vector<int> y = {1, 1, 0, 0, 1, 1, 0, 0};
    const PropensityModel model = fit_logistic(raw_design(features), y, 0.0, 1e-10, 200);
    CHECK(model.beta(1) == doctest::Approx(0.0).epsilon(1e-8));
  }
  SUBCASE("separable data with ridge matches the numeric oracle") {
    Eigen::MatrixXd features(6, 1);
    features << -2.0, -1.5, -0.5, 0.5, 1.5, 2.0;
    std::vector<int> y = {0, 0, 0, 1, 1, 1};
    const DesignMatrix design = raw_design(features);
    const PropensityModel model = fit_logistic(design, y, 1e-2, 1e-10, 500);
    const Eigen::VectorXd oracle = finite_difference_newton(design.X, y, 1e-2);
    for (Eigen::Index j = 0; j < model.beta.size(); ++j) {
      CHECK(model.beta(j) == doctest::Approx(oracle(j)).epsilon(1e-4));
    }
  }
  SUBCASE("degenerate labels are rejected") {
    DesignMatrix design = raw_design(Eigen::MatrixXd::Zero(4, 0));
    CHECK_THROWS_AS(fit_logistic(design, {1, 1, 1, 1}, 0.0, 1e-8, 50), ValidationError);
    CHECK_THROWS_AS(fit_logistic(design, {0, 0, 0, 0}, 0.0, 1e-8, 50), ValidationError);
  }
  SUBCASE("non-convergence carries the last iterate") {
    Eigen::MatrixXd features(6, 1);
    features << -2, -1.5, -0.5, 0.5, 1.5, 2;
    std::vector<int> y = {0, 0, 0, 1, 1, 1};
    try {
      fit_logistic(raw_design(features), y, 0.0, 1e-14, 1);
      FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
      CHECK(e.last_beta.size() == 2);
    }
  }
  SUBCASE("penalized log-likelihood never decreases across accepted steps") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd features(30, 2);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) {
      features(i, 0) = normal(gen);
      features(i, 1) = normal(gen);
      y[i] = (features(i, 0) + 0.5 * normal(gen)) > 0 ? 1 : 0;
    }
    const PropensityModel model = fit_logistic(raw_design(features), y, 1e-3, 1e-8, 200);
    for (std::size_t i = 1; i < model.ll_history.size(); ++i) {
      const double slack = 1e-12 * (std::abs(model.ll_history[i - 1]) + 1.0);
      CHECK(model.ll_history[i] >= model.ll_history[i - 1] - slack);
    }
  }
}

TEST_CASE("prediction") {
  std::vector<SubmissionRecord> records;
  std::vector<const SubmissionRecord*> ptrs;
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    auto r = covariate_record("r" + std::to_string(i), 0.5 + 0.1 * normal(gen),
                              i % 2 ? "t0" : "t1");
    r.complexity = std::clamp(r.complexity, 0.0, 1.0);
    records.push_back(r);
  }
  for (auto& r : records) ptrs.push_back(&r);
  for (int i = 0; i < 40; ++i) {
    y.push_back((records[i].complexity > 0.5) == (i % 3 != 0) ? 1 : 0);
  }

  SUBCASE("zero coefficients give 0.5 everywhere") {
    DesignMatrix design = encode_covariates(ptrs, {"complexity"});
    PropensityModel model;
    model.beta = Eigen::VectorXd::Zero(design.X.cols());
    model.columns = design.columns;
    model.encoding = design.encoding;
    const Eigen::VectorXd scores = predict(model, design);
    for (Eigen::Index i = 0; i < scores.size(); ++i) CHECK(scores(i) == 0.5);
  }
  SUBCASE("intercept-only logit(0.3) scores 0.3 everywhere") {
    DesignMatrix design = encode_covariates(ptrs, {"complexity"});
    PropensityModel model;
    model.beta = Eigen::VectorXd::Zero(design.X.cols());
    model.beta(0) = std::log(0.3 / 0.7);
    model.columns = design.columns;
    model.encoding = design.encoding;
    const Eigen::VectorXd scores = predict(model, design);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      CHECK(scores(i) == doctest::Approx(0.3).epsilon(1e-12));
    }
  }
  SUBCASE("training-set mean prediction equals prevalence at ridge zero") {
    const PropensityModel model =
        fit_propensity(ptrs, y, {"complexity", "topic_cluster"}, 0.0, 1e-10, 300);
    const std::vector<double> scores = predict_scores(model, ptrs);
    double total = 0;
    for (double s : scores) total += s;
    double prevalence = 0;
    for (int label : y) prevalence += label;
    CHECK(std::abs(total - prevalence) <= 1e-6 * static_cast<double>(y.size()));
  }
  SUBCASE("descriptor mismatch is rejected") {
    const PropensityModel model = fit_propensity(ptrs, y, {"complexity"}, 1e-4);
    const DesignMatrix other = encode_covariates(ptrs, {"topic_cluster"});
    CHECK_THROWS_AS(predict(model, other), ValidationError);
  }
  SUBCASE("predictions are invariant to affine rescaling of a raw covariate") {
    const PropensityModel model = fit_propensity(ptrs, y, {"complexity"}, 1e-4);
    const std::vector<double> scores = predict_scores(model, ptrs);
    std::vector<SubmissionRecord> rescaled = records;
    for (auto& r : rescaled) r.complexity = std::clamp(0.1 + 0.5 * r.complexity, 0.0, 1.0);
    std::vector<const SubmissionRecord*> rescaled_ptrs;
    for (auto& r : rescaled) rescaled_ptrs.push_back(&r);
    const PropensityModel refit =
        fit_propensity(rescaled_ptrs, y, {"complexity"}, 1e-4);
    const std::vector<double> rescored = predict_scores(refit, rescaled_ptrs);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      CHECK(rescored[i] == doctest::Approx(scores[i]).epsilon(1e-6));
    }
  }
}
