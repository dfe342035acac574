#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fmasss/analysis.hpp"
#include "fmasss/error.hpp"
#include "fmasss/fda.hpp"
#include "fmasss/glm.hpp"
#include "fmasss/sim.hpp"
#include "oracles.hpp"

using namespace fmasss;
using glm::Family;

namespace {

Eigen::VectorXd poisson_draws(const Eigen::VectorXd& mu, std::mt19937_64& rng) {
  Eigen::VectorXd y(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) y(i) = std::poisson_distribution<int>(mu(i))(rng);
  return y;
}

}  // namespace

TEST(Family, LinksAndLoglik) {
  const auto p = Family::poisson(), b = Family::bernoulli(), g = Family::gaussian();
  EXPECT_DOUBLE_EQ(p.link(std::exp(1.5)), 1.5);
  EXPECT_NEAR(b.inverse_link(b.link(0.3)), 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(g.link(2.5), 2.5);
  EXPECT_NEAR(p.loglik(3, 2.0), 3 * std::log(2.0) - 2.0 - std::log(6.0), 1e-14);
  EXPECT_DOUBLE_EQ(p.loglik(0, 2.0), -2.0);
  EXPECT_NEAR(b.loglik(1, 0.25), std::log(0.25), 1e-15);
  EXPECT_NEAR(g.loglik(1.0, 0.0, 4.0), -0.5 * std::log(2 * std::numbers::pi * 4.0) - 1.0 / 8.0, 1e-14);
  EXPECT_EQ(Family::from_name("bernoulli").kind, glm::FamilyKind::Bernoulli);
  EXPECT_THROW(Family::from_name("gamma"), ConfigError);
}

TEST(FitGlm, PoissonInterceptOnlyMatchesRatio) {
  Eigen::VectorXd y(4), N(4);
  y << 3, 0, 7, 2;
  N << 100, 250, 400, 90;
  const auto fit = glm::fit_glm(y, Eigen::MatrixXd::Ones(4, 1), Family::poisson(), N.array().log().matrix());
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.coefficients(0), std::log(y.sum() / N.sum()), 1e-10);
}

TEST(FitGlm, GaussianEqualsOls) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd X(50, 3);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = z(rng);
    X(i, 2) = z(rng);
    y(i) = 1.0 + 2.0 * X(i, 1) - X(i, 2) + z(rng);
  }
  const auto fit = glm::fit_glm(y, X, Family::gaussian(), Eigen::VectorXd::Zero(50));
  const Eigen::VectorXd ols = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  EXPECT_LT((fit.coefficients - ols).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fit.dispersion, (y - X * ols).squaredNorm() / 50.0, 1e-10);
}

TEST(FitGlm, BinaryCovariateClosedForms) {
  // Saturated two-group models have closed-form MLEs.
  Eigen::MatrixXd X(8, 2);
  X.col(0).setOnes();
  X.col(1) << 0, 0, 0, 0, 1, 1, 1, 1;
  Eigen::VectorXd yb(8), yp(8);
  yb << 1, 0, 0, 1, 1, 1, 1, 0;
  yp << 2, 5, 1, 0, 9, 7, 8, 12;
  const auto fb = glm::fit_glm(yb, X, Family::bernoulli(), Eigen::VectorXd::Zero(8));
  EXPECT_NEAR(fb.coefficients(0), std::log(0.5 / 0.5), 1e-9);
  EXPECT_NEAR(fb.coefficients(0) + fb.coefficients(1), std::log(0.75 / 0.25), 1e-9);
  const auto fp = glm::fit_glm(yp, X, Family::poisson(), Eigen::VectorXd::Zero(8));
  EXPECT_NEAR(fp.coefficients(0), std::log(8.0 / 4.0), 1e-9);
  EXPECT_NEAR(fp.coefficients(1), std::log(36.0 / 8.0), 1e-9);
}

TEST(FitGlm, PoissonRecoversKnownCoefficients) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 400;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd off(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = z(rng);
    off(i) = std::log(1000.0 + 10.0 * i);
  }
  const double a = -6.0, b = 0.4;
  const Eigen::VectorXd mu = (off.array() + a + b * X.col(1).array()).exp();
  const auto fit = glm::fit_glm(poisson_draws(mu, rng), X, Family::poisson(), off);
  // Standard errors from the Fisher information at the truth.
  const Eigen::MatrixXd info = X.transpose() * mu.asDiagonal() * X;
  const Eigen::MatrixXd cov = info.inverse();
  EXPECT_LT(std::abs(fit.coefficients(0) - a), 3 * std::sqrt(cov(0, 0)));
  EXPECT_LT(std::abs(fit.coefficients(1) - b), 3 * std::sqrt(cov(1, 1)));
}

TEST(FitGlm, ScoreEquationsAndGradient) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  for (auto family : {Family::poisson(), Family::bernoulli(), Family::gaussian()}) {
    const int n = 120;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n), off = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1;
      X(i, 1) = z(rng);
      X(i, 2) = z(rng);
      const double eta = 0.3 + 0.5 * X(i, 1) - 0.2 * X(i, 2);
      if (family.kind == glm::FamilyKind::Poisson) y(i) = std::poisson_distribution<int>(std::exp(eta + 2))(rng);
      if (family.kind == glm::FamilyKind::Bernoulli) y(i) = std::bernoulli_distribution(1 / (1 + std::exp(-eta)))(rng);
      if (family.kind == glm::FamilyKind::Gaussian) y(i) = eta + z(rng);
    }
    if (family.kind == glm::FamilyKind::Poisson) off.setConstant(2.0);
    const auto fit = glm::fit_glm(y, X, family, off);
    ASSERT_TRUE(fit.converged) << family.name();
    const Eigen::VectorXd score = X.transpose() * (y - fit.fitted);
    EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, y.cwiseAbs().sum())) << family.name();
    const auto grad = glm::numerical_gradient(y, X, family, off, fit.coefficients, fit.dispersion);
    EXPECT_LT(grad.norm(), 1e-4 * (1 + std::abs(fit.loglik))) << family.name();
    EXPECT_NEAR(glm::glm_loglik(y, X, family, off, fit.coefficients, fit.dispersion), fit.loglik, 1e-8);
  }
}

TEST(FitGlm, RejectsCollinearAndRankDeficient) {
  Eigen::MatrixXd X(6, 3);
  X.col(0).setOnes();
  X.col(1) << 1, 2, 3, 4, 5, 6;
  X.col(2) = 2.0 * X.col(1);
  Eigen::VectorXd y(6);
  y << 1, 2, 1, 3, 2, 4;
  try {
    glm::fit_glm(y, X, Family::poisson(), Eigen::VectorXd::Zero(6), {}, {"one", "z1", "z2"});
    FAIL();
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("z1"), std::string::npos);
  }
  Eigen::MatrixXd R(6, 3);
  R.col(0).setOnes();
  R.col(1) << 1, 0, 1, 0, 1, 0;
  R.col(2) = R.col(0) - R.col(1);
  EXPECT_THROW(glm::fit_glm(y, R, Family::poisson(), Eigen::VectorXd::Zero(6)), FitError);
  Eigen::VectorXd bad = y;
  bad(0) = 1.5;
  EXPECT_THROW(glm::fit_glm(bad, X.leftCols(2), Family::poisson(), Eigen::VectorXd::Zero(6)), FitError);
}

TEST(Aic, Formula) {
  EXPECT_DOUBLE_EQ(glm::aic(-10.0, 2, 3, Family::poisson()), 20.0 + 2.0 * 6);
  EXPECT_DOUBLE_EQ(glm::aic(-10.0, 0, 0, Family::gaussian()), 20.0 + 2.0 * 2);
}

TEST(SelectTruncation, SingleCandidate) {
  Eigen::VectorXd y(5), off = Eigen::VectorXd::Zero(5);
  y << 1, 3, 2, 5, 4;
  Eigen::MatrixXd C(5, 1);
  C << -2, -1, 0, 1, 2;
  const auto sel = glm::select_truncation(y, Eigen::MatrixXd(5, 0), C, Eigen::VectorXd::Ones(1), Family::poisson(),
                                          off, 0.95);
  EXPECT_EQ(sel.J, 1);
  ASSERT_EQ(sel.candidates.size(), 1u);
}

TEST(SelectTruncation, CandidatesRespectInertiaCap) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 80, K = 6;
  Eigen::VectorXd ev(K);
  ev << 5, 2, 1, 0.5, 0.3, 0.2;
  Eigen::MatrixXd C(n, K);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < K; ++j) C(i, j) = std::sqrt(ev(j)) * z(rng);
  const Eigen::VectorXd off = Eigen::VectorXd::Constant(n, 3.0);
  const Eigen::VectorXd mu = (off.array() + 0.2 * C.col(0).array()).exp();
  const auto y = poisson_draws(mu, rng);
  const auto sel = glm::select_truncation(y, Eigen::MatrixXd(n, 0), C, ev, Family::poisson(), off, 0.9);
  // Cumulative inertia: 0.556, 0.778, 0.889, 0.944, ... so J = 1..3 plus boundary 4.
  ASSERT_EQ(sel.candidates.size(), 4u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(sel.candidates[k].cumulative_inertia, 0.9);
  EXPECT_GT(sel.candidates[3].cumulative_inertia, 0.9);
  double best = std::numeric_limits<double>::infinity();
  int best_j = 0;
  for (const auto& c : sel.candidates)
    if (c.aic && *c.aic < best) {
      best = *c.aic;
      best_j = c.J;
    }
  EXPECT_EQ(sel.J, best_j);
}

TEST(SelectTruncation, TiesGoToSmallerJ) {
  // A zero score column adds nothing; with equal loglik the AIC penalty
  // already favours the smaller J, and an exact tie is resolved the same way.
  const int n = 30;
  Eigen::VectorXd y(n), off = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd C(n, 2);
  for (int i = 0; i < n; ++i) {
    y(i) = i % 4;
    C(i, 0) = (i % 5) - 2.0;
    C(i, 1) = (i % 3) - 1.0;
  }
  Eigen::VectorXd ev(2);
  ev << 2.0, 1.0;
  const auto sel = glm::select_truncation(y, Eigen::MatrixXd(n, 0), C, ev, Family::poisson(), off, 1.0);
  ASSERT_EQ(sel.candidates.size(), 2u);
  if (*sel.candidates[0].aic <= *sel.candidates[1].aic) EXPECT_EQ(sel.J, 1);
}

TEST(SelectTruncation, RecoversTwoComponentSignal) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.0);
  int hits = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 94, K = 5;
    Eigen::VectorXd ev(K);
    ev << 1.0, 0.6, 0.05, 0.03, 0.02;
    Eigen::MatrixXd C(n, K);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < K; ++j) C(i, j) = std::sqrt(ev(j)) * z(rng);
    const Eigen::VectorXd off = Eigen::VectorXd::Constant(n, std::log(50.0));
    const Eigen::VectorXd mu = (off.array() + 0.5 * C.col(0).array() - 0.6 * C.col(1).array()).exp();
    const auto sel = glm::select_truncation(poisson_draws(mu, rng), Eigen::MatrixXd(n, 0), C, ev, Family::poisson(),
                                            off, 0.95);
    hits += sel.J >= 2;
  }
  EXPECT_GE(hits, 90);
}

TEST(FitNull, ExplicitInterceptIdentity) {
  std::mt19937_64 rng(40);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(1e4, 1e6);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 60;
    glm::NullModel m;
    m.family = Family::poisson();
    m.scalar_covariates.resize(n, 2);
    m.scores.resize(n, 3);
    m.populations.resize(n);
    for (int i = 0; i < n; ++i) {
      m.populations(i) = u(rng);
      for (int k = 0; k < 2; ++k) m.scalar_covariates(i, k) = z(rng);
      for (int k = 0; k < 3; ++k) m.scores(i, k) = z(rng);
    }
    m.base_offset = m.populations.array().log().matrix();
    m.J = 1 + rep % 3;
    const Eigen::VectorXd mu = (m.base_offset.array() - 10.0 + 0.3 * m.scalar_covariates.col(0).array()).exp();
    const auto y = poisson_draws(mu, rng);
    const auto fit = glm::fit_null(m, y);
    EXPECT_NEAR(std::exp(fit.alpha) * fit.adjusted_populations.sum() / y.sum(), 1.0, 1e-8);
    EXPECT_EQ(fit.theta.size(), m.J);
    EXPECT_EQ(fit.beta.size(), 2);
    const Eigen::VectorXd expect_adj =
        m.populations.array() *
        (m.scalar_covariates * fit.beta + m.scores.leftCols(m.J) * fit.theta).array().exp();
    EXPECT_LT(((fit.adjusted_populations - expect_adj).array() / expect_adj.array()).abs().maxCoeff(), 1e-12);
    const auto X = glm::null_design(m.scalar_covariates, m.scores, m.J);
    Eigen::VectorXd b(X.cols());
    b << fit.alpha, fit.beta, fit.theta;
    const auto grad = glm::numerical_gradient(y, X, m.family, m.base_offset, b);
    EXPECT_LT(grad.norm(), 1e-4 * (1 + std::abs(fit.loglik)));
  }
}

TEST(FitNull, NoCovariatesGivesRatioEstimator) {
  glm::NullModel m;
  m.family = Family::poisson();
  m.populations.resize(3);
  m.populations << 10, 20, 30;
  m.base_offset = m.populations.array().log().matrix();
  m.scalar_covariates.resize(3, 0);
  m.scores.resize(3, 0);
  Eigen::VectorXd y(3);
  y << 1, 2, 9;
  const auto fit = glm::fit_null(m, y);
  EXPECT_NEAR(fit.alpha, std::log(12.0 / 60.0), 1e-12);
  EXPECT_LT((fit.adjusted_populations - m.populations).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(glm::fit_null(m, Eigen::VectorXd::Zero(3)), FitError);
}

TEST(ParameterFunction, TrivialCasesAndScoreIdentity) {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto basis = fda::BasisSystem::bspline_uniform(3, 8, 0.0, 7.0);
  Eigen::MatrixXd A(20, basis.dimension());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = z(rng);
  const auto fd = fda::functional_pca(A, fda::gram_matrix(basis));
  glm::NullFit fit;
  fit.J = 3;
  fit.theta = Eigen::VectorXd::Zero(3);
  std::vector<double> grid{0.0, 1.0, 3.3, 7.0};
  for (const auto& p : glm::parameter_function(fit, fd, basis, grid)) EXPECT_EQ(p.value, 0.0);
  fit.J = 1;
  fit.theta = Eigen::VectorXd::Ones(1);
  for (const auto& p : glm::parameter_function(fit, fd, basis, grid))
    EXPECT_NEAR(p.value, fda::eigenfunction_eval(fd, basis, 1, p.t), 1e-14);

  fit.J = 3;
  fit.theta = Eigen::Vector3d(0.4, -1.1, 0.25);
  std::vector<double> nodes;
  const auto rule = basis.product_quadrature();
  const auto theta = glm::parameter_function(fit, fd, basis, rule.nodes);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double integral = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q)
      integral += rule.weights[q] * (fda::curve_eval(fd, basis, i, rule.nodes[q]) -
                                     basis.evaluate(rule.nodes[q]).dot(fd.mean_coeffs)) * theta[q].value;
    EXPECT_NEAR(integral, fd.scores.row(i).head(3).dot(fit.theta), 1e-6);
  }
  std::vector<double> outside{8.0};
  EXPECT_THROW(glm::parameter_function(fit, fd, basis, outside), DomainError);
}

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double k = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  return (sab - sa * sb / k) / std::sqrt((saa - sa * sa / k) * (sbb - sb * sb / k));
}

}  // namespace

// Only the part of theta lying in the span of the retained eigenfunctions is
// identifiable. The estimate must track that projection closely, and its
// correlation with the raw theta must sit at the ceiling set by the projection.
TEST(FitNull, RecoveredThetaTracksIdentifiablePart) {
  sim::SimulationConfig cfg;
  cfg.finalize();
  const double kappa = sim::effective_theta_scale(cfg);
  cfg.theta_scale = kappa;
  std::vector<double> grid;
  for (int k = 0; k <= 210; ++k) grid.push_back(0.1 * k);
  std::vector<double> truth;
  for (double t : grid) truth.push_back(kappa * sim::theta_shape(t));

  double r_projection = 0.0, r_raw = 0.0, ceiling = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    auto rng = derive_stream(99, {static_cast<std::uint64_t>(r)});
    const auto data = sim::generate_dataset(cfg, 1.0, rng);
    AnalysisOptions opts;
    opts.basis.lower = 0.0;
    opts.basis.upper = 21.0;
    const auto design = build_covariates(AdjustmentMode::Functional, Eigen::MatrixXd(94, 0), {}, data.series, opts);
    const auto& fd = *design.functional;
    const auto& basis = *design.basis;
    glm::NullModel m;
    m.family = Family::poisson();
    m.scalar_covariates = design.scalar;
    m.scores = design.scores;
    m.populations = data.populations;
    m.base_offset = data.populations.array().log().matrix();
    m.J = glm::select_truncation(data.y, m.scalar_covariates, m.scores, design.eigenvalues, m.family, m.base_offset,
                                 0.95).J;
    const auto fit = glm::fit_null(m, data.y);
    std::vector<double> est;
    for (const auto& p : glm::parameter_function(fit, fd, basis, grid)) est.push_back(p.value);

    const auto rule = basis.product_quadrature();
    std::vector<double> coef(static_cast<std::size_t>(m.J));
    for (int j = 1; j <= m.J; ++j)
      coef[j - 1] = rule.integrate(
          [&](double t) { return kappa * sim::theta_shape(t) * fda::eigenfunction_eval(fd, basis, j, t); });
    std::vector<double> projected;
    for (double t : grid) {
      double v = 0.0;
      for (int j = 1; j <= m.J; ++j) v += coef[j - 1] * fda::eigenfunction_eval(fd, basis, j, t);
      projected.push_back(v);
    }
    r_projection += correlation(est, projected);
    r_raw += correlation(est, truth);
    ceiling += correlation(projected, truth);
  }
  r_projection /= reps;
  r_raw /= reps;
  ceiling /= reps;
  EXPECT_GT(r_projection, 0.8);
  EXPECT_GT(r_raw, 0.0);
  EXPECT_NEAR(r_raw, ceiling, 0.1);
  RecordProperty("corr_projection", std::to_string(r_projection));
  RecordProperty("corr_raw", std::to_string(r_raw));
  RecordProperty("corr_ceiling", std::to_string(ceiling));
}
