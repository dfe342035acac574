#include "fmasss/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fmasss/error.hpp"

namespace fmasss::glm {

namespace {

constexpr double kMuFloor = 1e-300;

std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
  if (j < static_cast<Eigen::Index>(names.size())) return names[static_cast<std::size_t>(j)];
  return "col" + std::to_string(j);
}

void check_design(const Eigen::MatrixXd& X, const GlmOptions& options, const std::vector<std::string>& names) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (p == 0) throw FitError("design matrix has no columns");
  if (n < p) throw FitError("design has more columns (" + std::to_string(p) + ") than rows (" +
                            std::to_string(n) + ")");
  if (!X.allFinite()) throw FitError("design matrix has non-finite entries");

  // Pairwise guard on non-constant columns.
  Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  for (Eigen::Index a = 0; a < p; ++a) {
    if (norms(a) <= 1e-12 * std::max(1.0, X.col(a).cwiseAbs().maxCoeff())) continue;
    for (Eigen::Index b = a + 1; b < p; ++b) {
      if (norms(b) <= 1e-12 * std::max(1.0, X.col(b).cwiseAbs().maxCoeff())) continue;
      double r = centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b));
      if (std::abs(r) > options.collinearity_threshold) {
        std::ostringstream os;
        os << "collinear columns '" << column_label(names, a) << "' and '" << column_label(names, b)
           << "' (correlation " << r << ")";
        throw FitError(os.str());
      }
    }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::ostringstream os;
    os << "rank-deficient design (rank " << qr.rank() << " < " << p << "); collinear columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) os << " '" << column_label(names, perm(k)) << "'";
    throw FitError(os.str());
  }
}

double total_loglik(const Family& f, const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double dispersion) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += f.loglik(y(i), mu(i), dispersion);
  return s;
}

Eigen::VectorXd mean_of(const Family& f, const Eigen::VectorXd& eta) {
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu(i) = f.inverse_link(eta(i));
  return mu;
}

}  // namespace

std::string Family::name() const {
  switch (kind) {
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Bernoulli: return "bernoulli";
    case FamilyKind::Gaussian: return "gaussian";
  }
  return "unknown";
}

Family Family::from_name(const std::string& name) {
  if (name == "poisson") return poisson();
  if (name == "bernoulli") return bernoulli();
  if (name == "gaussian") return gaussian();
  throw ConfigError("unknown family '" + name + "' (expected poisson, bernoulli or gaussian)");
}

double Family::link(double mu) const {
  switch (kind) {
    case FamilyKind::Poisson: return std::log(mu);
    case FamilyKind::Bernoulli: return std::log(mu / (1.0 - mu));
    case FamilyKind::Gaussian: return mu;
  }
  return mu;
}

double Family::inverse_link(double eta) const {
  switch (kind) {
    case FamilyKind::Poisson: return std::exp(eta);
    case FamilyKind::Bernoulli:
      return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    case FamilyKind::Gaussian: return eta;
  }
  return eta;
}

double Family::variance(double mu) const {
  switch (kind) {
    case FamilyKind::Poisson: return mu;
    case FamilyKind::Bernoulli: return mu * (1.0 - mu);
    case FamilyKind::Gaussian: return 1.0;
  }
  return 1.0;
}

double Family::loglik(double y, double mu, double dispersion) const {
  switch (kind) {
    case FamilyKind::Poisson: {
      double term = y == 0.0 ? 0.0 : y * std::log(mu);
      return term - mu - std::lgamma(y + 1.0);
    }
    case FamilyKind::Bernoulli: {
      double a = y == 0.0 ? 0.0 : y * std::log(mu);
      double b = y == 1.0 ? 0.0 : (1.0 - y) * std::log1p(-mu);
      return a + b;
    }
    case FamilyKind::Gaussian: {
      double r = y - mu;
      return -0.5 * std::log(2.0 * std::numbers::pi * dispersion) - r * r / (2.0 * dispersion);
    }
  }
  return 0.0;
}

void Family::validate_outcome(const Eigen::VectorXd& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = y(i);
    if (!std::isfinite(v)) throw FitError("outcome " + std::to_string(i) + " is not finite");
    if (kind == FamilyKind::Poisson && (v < 0.0 || v != std::floor(v)))
      throw FitError("Poisson outcome " + std::to_string(i) + " is not a non-negative integer");
    if (kind == FamilyKind::Bernoulli && v != 0.0 && v != 1.0)
      throw FitError("Bernoulli outcome " + std::to_string(i) + " is not 0 or 1");
  }
}

double glm_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const Family& family,
                  const Eigen::VectorXd& offset, const Eigen::VectorXd& b, double dispersion) {
  Eigen::VectorXd eta = design * b + offset;
  return total_loglik(family, y, mean_of(family, eta), dispersion);
}

Eigen::VectorXd numerical_gradient(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const Family& family,
                                   const Eigen::VectorXd& offset, const Eigen::VectorXd& b, double dispersion) {
  Eigen::VectorXd g(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(b(j)));
    Eigen::VectorXd up = b, down = b;
    up(j) += h;
    down(j) -= h;
    g(j) = (glm_loglik(y, design, family, offset, up, dispersion) -
            glm_loglik(y, design, family, offset, down, dispersion)) /
           (2.0 * h);
  }
  return g;
}

GlmFit fit_glm(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Family& family,
               const Eigen::VectorXd& offset, const GlmOptions& options,
               const std::vector<std::string>& column_names) {
  const auto n = y.size();
  if (X.rows() != n || offset.size() != n)
    throw FitError("outcome, design and offset lengths disagree");
  if (!offset.allFinite()) throw FitError("offset has non-finite entries");
  family.validate_outcome(y);
  check_design(X, options, column_names);

  const bool gaussian = family.kind == FamilyKind::Gaussian;
  auto dispersion_of = [&](const Eigen::VectorXd& mu) {
    if (!gaussian) return 1.0;
    if (options.fixed_dispersion) return *options.fixed_dispersion;
    double rss = (y - mu).squaredNorm() / static_cast<double>(n);
    return std::max(rss, 1e-300);
  };

  Eigen::VectorXd mu(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (family.kind) {
      case FamilyKind::Poisson: mu(i) = y(i) + 0.5; break;
      case FamilyKind::Bernoulli: mu(i) = (y(i) + 0.5) / 2.0; break;
      case FamilyKind::Gaussian: mu(i) = y(i); break;
    }
  }
  Eigen::VectorXd eta(n);
  for (Eigen::Index i = 0; i < n; ++i) eta(i) = family.link(mu(i));

  GlmFit fit;
  Eigen::VectorXd b_old;
  double ll_old = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd w(n), z(n);

  for (int it = 1; it <= options.max_iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // Canonical links: d mu / d eta equals the variance function.
      double wi = gaussian ? 1.0 : std::max(family.variance(mu(i)), kMuFloor);
      w(i) = wi;
      z(i) = eta(i) - offset(i) + (y(i) - mu(i)) / wi;
    }
    Eigen::VectorXd sw = w.cwiseSqrt();
    Eigen::MatrixXd WX = sw.asDiagonal() * X;
    Eigen::VectorXd b = WX.colPivHouseholderQr().solve(sw.cwiseProduct(z));

    auto evaluate = [&](const Eigen::VectorXd& coef, Eigen::VectorXd& eta_out, Eigen::VectorXd& mu_out) {
      eta_out = X * coef + offset;
      mu_out = mean_of(family, eta_out);
      return total_loglik(family, y, mu_out, dispersion_of(mu_out));
    };

    Eigen::VectorXd eta_new, mu_new;
    double ll = evaluate(b, eta_new, mu_new);
    if (b_old.size() > 0) {
      int halvings = 0;
      while ((!std::isfinite(ll) || ll < ll_old) && halvings < 40) {
        b = 0.5 * (b + b_old);
        ll = evaluate(b, eta_new, mu_new);
        ++halvings;
      }
    }
    if (!std::isfinite(ll)) throw FitError("log-likelihood diverged (non-finite) during IRLS");

    const double change = std::abs(ll - ll_old);
    fit.iterations = it;
    b_old = b;
    eta = eta_new;
    mu = mu_new;
    const bool done = std::isfinite(ll_old) && change < options.tolerance * (std::abs(ll) + 1.0);
    ll_old = ll;
    if (done) {
      fit.converged = true;
      break;
    }
  }

  fit.coefficients = b_old;
  fit.linear_predictor = eta;
  fit.fitted = mu;
  fit.dispersion = dispersion_of(mu);
  fit.loglik = total_loglik(family, y, mu, fit.dispersion);
  if (!std::isfinite(fit.loglik)) throw FitError("log-likelihood diverged (non-finite) during IRLS");
  return fit;
}

Eigen::MatrixXd null_design(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& C, int J) {
  const auto n = std::max(Z.rows(), C.rows());
  if ((Z.cols() > 0 && Z.rows() != n) || (J > 0 && C.rows() != n))
    throw FitError("scalar covariates and scores have different row counts");
  if (J < 0 || J > C.cols()) throw FitError("truncation J=" + std::to_string(J) + " outside 0.." +
                                            std::to_string(C.cols()));
  Eigen::MatrixXd X(n, 1 + Z.cols() + J);
  X.col(0).setOnes();
  if (Z.cols() > 0) X.middleCols(1, Z.cols()) = Z;
  if (J > 0) X.rightCols(J) = C.leftCols(J);
  return X;
}

double aic(double loglik, int p, int J, const Family& family) {
  double k = 1.0 + p + J + (family.kind == FamilyKind::Gaussian ? 1.0 : 0.0);
  return -2.0 * loglik + 2.0 * k;
}

TruncationSelection select_truncation(const Eigen::VectorXd& y, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& C,
                                      const Eigen::VectorXd& eigenvalues, const Family& family,
                                      const Eigen::VectorXd& offset, double inertia_cap) {
  if (!(inertia_cap > 0.0 && inertia_cap <= 1.0))
    throw ConfigError("inertia_cap must lie in (0, 1]");
  const int K = static_cast<int>(C.cols());
  if (K < 1 || eigenvalues.size() != K) throw SelectionError("no truncation candidates (K = 0)");

  const double total = eigenvalues.sum();
  TruncationSelection sel;
  for (int J = 1; J <= K; ++J) {
    double cum = (J == K || total <= 0.0) ? 1.0 : eigenvalues.head(J).sum() / total;
    sel.candidates.push_back({J, cum, std::nullopt, std::nullopt, {}});
    if (cum > inertia_cap) break;
  }

  std::optional<double> best;
  Eigen::MatrixXd Z_used = Z.cols() > 0 ? Z : Eigen::MatrixXd(C.rows(), 0);
  for (auto& cand : sel.candidates) {
    try {
      auto X = null_design(Z_used, C, cand.J);
      auto fit = fit_glm(y, X, family, offset);
      cand.loglik = fit.loglik;
      cand.aic = aic(fit.loglik, static_cast<int>(Z_used.cols()), cand.J, family);
      if (!best || *cand.aic < *best) {
        best = cand.aic;
        sel.J = cand.J;
      }
    } catch (const Error& e) {
      cand.error = e.what();
    }
  }
  if (!best) {
    std::string msg = "every truncation candidate failed:";
    for (const auto& c : sel.candidates) msg += " J=" + std::to_string(c.J) + " (" + c.error + ")";
    throw SelectionError(msg);
  }
  return sel;
}

NullFit fit_null(const NullModel& model, const Eigen::VectorXd& y, const GlmOptions& options) {
  const auto n = static_cast<Eigen::Index>(model.size());
  if (y.size() != n) throw FitError("outcome length does not match the null model");
  const int p = model.p();
  Eigen::MatrixXd Z = model.scalar_covariates.cols() > 0 ? model.scalar_covariates : Eigen::MatrixXd(n, 0);
  Eigen::MatrixXd X = null_design(Z, model.scores, model.J);

  std::vector<std::string> names{"intercept"};
  for (int j = 0; j < p; ++j) names.push_back("z" + std::to_string(j + 1));
  for (int j = 0; j < model.J; ++j) names.push_back("score" + std::to_string(j + 1));

  GlmFit g = fit_glm(y, X, model.family, model.base_offset, options, names);

  NullFit out;
  out.J = model.J;
  out.alpha = g.coefficients(0);
  out.beta = g.coefficients.segment(1, p);
  out.theta = g.coefficients.tail(model.J);
  out.covariate_offsets = X.rightCols(X.cols() - 1) * g.coefficients.tail(X.cols() - 1);
  out.converged = g.converged;
  out.dispersion = g.dispersion;

  if (model.family.kind == FamilyKind::Poisson) {
    const double O = y.sum();
    if (!(O > 0.0)) throw FitError("Poisson null model needs at least one case");
    out.adjusted_populations = model.populations.array() * out.covariate_offsets.array().exp();
    const double Nt = out.adjusted_populations.sum();
    out.alpha = std::log(O / Nt);
    out.fitted = std::exp(out.alpha) * out.adjusted_populations;
    const double identity_gap = std::abs(std::exp(out.alpha) * Nt - O) / O;
    if (!(identity_gap <= 1e-8))
      throw FitError("explicit intercept identity violated (relative gap " + std::to_string(identity_gap) + ")");
  } else {
    out.fitted = g.fitted;
  }
  out.full_offsets = model.base_offset + out.covariate_offsets;
  out.loglik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out.loglik += model.family.loglik(y(i), out.fitted(i), out.dispersion);
  return out;
}

std::vector<ParameterFunctionPoint> parameter_function(const NullFit& fit, const fda::FunctionalDesign& design,
                                                       const fda::BasisSystem& basis,
                                                       std::span<const double> grid) {
  if (fit.J > design.dimension()) throw IndexError("null fit truncation exceeds the functional design");
  std::vector<ParameterFunctionPoint> out;
  out.reserve(grid.size());
  Eigen::VectorXd coef = design.eigenvectors.leftCols(fit.J) * fit.theta;
  for (double t : grid) out.push_back({t, basis.evaluate(t).dot(coef)});
  return out;
}

}  // namespace fmasss::glm
