#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/fda.hpp"

namespace fmasss::glm {

enum class FamilyKind { Poisson, Bernoulli, Gaussian };

/// Exponential-family outcome model: canonical link, variance function and
/// per-observation log-likelihood. Gaussian carries a dispersion (sigma^2).
struct Family {
  FamilyKind kind = FamilyKind::Poisson;

  static Family poisson() { return {FamilyKind::Poisson}; }
  static Family bernoulli() { return {FamilyKind::Bernoulli}; }
  static Family gaussian() { return {FamilyKind::Gaussian}; }

  std::string name() const;
  static Family from_name(const std::string& name);

  double link(double mu) const;       ///< log, logit or identity
  double inverse_link(double eta) const;
  double variance(double mu) const;
  /// Log-likelihood of one observation. `dispersion` is only read by the
  /// Gaussian family. Poisson keeps the -log(y!) term and uses 0 log 0 = 0.
  double loglik(double y, double mu, double dispersion = 1.0) const;
  /// Checks the outcome support (counts, 0/1, reals).
  void validate_outcome(const Eigen::VectorXd& y) const;
};

struct GlmFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd linear_predictor;  ///< includes the offset
  Eigen::VectorXd fitted;            ///< mu
  double loglik = 0.0;
  double dispersion = 1.0;  ///< Gaussian: RSS / n; others: 1
  int iterations = 0;
  bool converged = false;
};

struct GlmOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;  ///< relative log-likelihood change
  /// Gaussian only: keep sigma^2 fixed at this value instead of RSS / n.
  std::optional<double> fixed_dispersion;
  /// Reject pairs of non-constant columns whose |correlation| exceeds this.
  double collinearity_threshold = 0.9999;
};

/// Maximizes sum_i F(y_i; mu_i) with link(mu) = X b + offset by IRLS with
/// step halving. Throws FitError for rank-deficient or collinear designs and
/// for a diverging likelihood.
GlmFit fit_glm(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const Family& family,
               const Eigen::VectorXd& offset, const GlmOptions& options = {},
               const std::vector<std::string>& column_names = {});

/// Total log-likelihood at coefficients b.
double glm_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const Family& family,
                  const Eigen::VectorXd& offset, const Eigen::VectorXd& b, double dispersion = 1.0);

/// Central finite-difference gradient of glm_loglik at b.
Eigen::VectorXd numerical_gradient(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                                   const Family& family, const Eigen::VectorXd& offset,
                                   const Eigen::VectorXd& b, double dispersion = 1.0);

/// Columns [1 | Z | C_{., 1..J}].
Eigen::MatrixXd null_design(const Eigen::MatrixXd& scalar_covariates, const Eigen::MatrixXd& scores, int J);

/// AIC = -2 loglik + 2 (1 + p + J), plus 2 for the Gaussian variance.
double aic(double loglik, int p, int J, const Family& family);

struct TruncationCandidate {
  int J = 0;
  double cumulative_inertia = 0.0;
  std::optional<double> aic;
  std::optional<double> loglik;
  std::string error;  ///< non-empty when the candidate fit failed
};

struct TruncationSelection {
  int J = 0;
  std::vector<TruncationCandidate> candidates;
};

/// Candidates are every J whose cumulative inertia is <= inertia_cap plus the
/// first J that exceeds it; returns the candidate with minimal AIC (the
/// smaller J on ties). Throws SelectionError when every candidate fails.
TruncationSelection select_truncation(const Eigen::VectorXd& y, const Eigen::MatrixXd& scalar_covariates,
                                      const Eigen::MatrixXd& scores, const Eigen::VectorXd& eigenvalues,
                                      const Family& family, const Eigen::VectorXd& offset,
                                      double inertia_cap);

/// The fixed parts of a null model: outcome family, covariate design and
/// the population offset. Refitting on new outcomes reuses all of it.
struct NullModel {
  Family family;
  Eigen::MatrixXd scalar_covariates;  ///< Z, n x p
  Eigen::MatrixXd scores;             ///< C, n x K (only the first J are used)
  int J = 0;
  Eigen::VectorXd base_offset;        ///< log N_i for Poisson, 0 otherwise
  Eigen::VectorXd populations;        ///< N_i (Poisson); empty otherwise

  std::size_t size() const { return static_cast<std::size_t>(base_offset.size()); }
  int p() const { return static_cast<int>(scalar_covariates.cols()); }
};

struct NullFit {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;  ///< coefficients on the first J eigenfunctions
  int J = 0;
  double loglik = 0.0;
  double dispersion = 1.0;
  Eigen::VectorXd covariate_offsets;     ///< Z_i' beta + C_i' theta
  Eigen::VectorXd adjusted_populations;  ///< N_i exp(Z_i' beta + C_i' theta), Poisson only
  Eigen::VectorXd fitted;                ///< mu_i under H0
  Eigen::VectorXd full_offsets;          ///< base offset + covariate offsets
  bool converged = false;
};

/// Fits the truncated null model. For Poisson the intercept is finished with
/// its explicit estimator exp(alpha) = sum Y / sum N~, and the identity is
/// verified to 1e-8 (FitError otherwise).
NullFit fit_null(const NullModel& model, const Eigen::VectorXd& y, const GlmOptions& options = {});

/// theta(t) = sum_{j<=J} theta_j * eigenfunction_j(t) on the grid.
struct ParameterFunctionPoint {
  double t;
  double value;
};
std::vector<ParameterFunctionPoint> parameter_function(const NullFit& fit, const fda::FunctionalDesign& design,
                                                       const fda::BasisSystem& basis,
                                                       std::span<const double> grid);

}  // namespace fmasss::glm
