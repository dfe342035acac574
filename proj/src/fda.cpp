#include "fmasss/fda.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fmasss/error.hpp"

namespace fmasss::fda {

namespace {

constexpr double kDomainSlack = 1e-12;

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

BasisSystem BasisSystem::bspline(int degree, std::vector<double> breakpoints) {
  if (degree < 0) throw ConfigError("B-spline degree must be >= 0");
  if (breakpoints.size() < 2) throw ConfigError("B-spline basis needs at least two breakpoints");
  for (double b : breakpoints)
    if (!std::isfinite(b)) throw ConfigError("B-spline breakpoints must be finite");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw ConfigError("B-spline breakpoints must be strictly increasing");

  BasisSystem b;
  b.lower_ = breakpoints.front();
  b.upper_ = breakpoints.back();
  b.dimension_ = static_cast<int>(breakpoints.size()) - 1 + degree;
  b.knots_.assign(degree + 1, b.lower_);
  b.knots_.insert(b.knots_.end(), breakpoints.begin() + 1, breakpoints.end() - 1);
  b.knots_.insert(b.knots_.end(), degree + 1, b.upper_);
  b.spec_ = BSplineSpec{degree, std::move(breakpoints)};
  return b;
}

BasisSystem BasisSystem::bspline_uniform(int degree, int knot_count, double lo, double hi) {
  if (knot_count < 2) throw ConfigError("knot_count must be >= 2 (both boundary knots included)");
  if (!(hi > lo)) throw ConfigError("basis domain must have upper > lower");
  std::vector<double> br(knot_count);
  for (int i = 0; i < knot_count; ++i) br[i] = lo + (hi - lo) * i / (knot_count - 1);
  br.back() = hi;
  return bspline(degree, std::move(br));
}

BasisSystem BasisSystem::fourier(double start, double period, int dimension) {
  if (!(period > 0.0) || !std::isfinite(start)) throw ConfigError("Fourier basis needs a positive period");
  if (dimension < 1) throw ConfigError("Fourier basis dimension must be >= 1");
  BasisSystem b;
  b.lower_ = start;
  b.upper_ = start + period;
  b.dimension_ = dimension;
  b.spec_ = FourierSpec{start, period, dimension};
  return b;
}

std::vector<double> BasisSystem::knot_vector() const { return knots_; }

Eigen::VectorXd BasisSystem::evaluate(double t) const {
  const double slack = kDomainSlack * std::max(1.0, std::abs(upper_ - lower_));
  if (!(t >= lower_ - slack && t <= upper_ + slack))
    throw DomainError("t = " + fmt_double(t) + " lies outside [" + fmt_double(lower_) + ", " +
                      fmt_double(upper_) + "]");
  t = std::clamp(t, lower_, upper_);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dimension_);

  if (const auto* f = as_fourier()) {
    const double u = 2.0 * std::numbers::pi * (t - f->start) / f->period;
    const double c0 = 1.0 / std::sqrt(f->period);
    const double c1 = std::sqrt(2.0 / f->period);
    out(0) = c0;
    for (int j = 1; j < dimension_; ++j) {
      int freq = (j + 1) / 2;
      out(j) = c1 * ((j % 2 == 1) ? std::sin(freq * u) : std::cos(freq * u));
    }
    return out;
  }

  // Cox-de Boor, triangular form: the degree+1 functions that are nonzero on
  // the knot span containing t.
  const int p = as_bspline()->degree;
  const int K = dimension_;
  const auto& U = knots_;
  int span;
  if (t >= U[K]) {
    span = K - 1;
  } else {
    span = static_cast<int>(std::upper_bound(U.begin() + p, U.begin() + K + 1, t) - U.begin()) - 1;
  }
  std::vector<double> N(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double denom = right[r + 1] + left[j - r];
      double temp = denom == 0.0 ? 0.0 : N[r] / denom;
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  for (int r = 0; r <= p; ++r) out(span - p + r) = N[r];
  return out;
}

QuadratureRule BasisSystem::product_quadrature() const {
  if (const auto* s = as_bspline()) {
    return composite_gauss_legendre(s->degree + 1, s->breakpoints);
  }
  const auto* f = as_fourier();
  const int pieces = 4 * (f->dimension + 1);
  std::vector<double> br(pieces + 1);
  for (int i = 0; i <= pieces; ++i) br[i] = lower_ + (upper_ - lower_) * i / pieces;
  br.back() = upper_;
  return composite_gauss_legendre(10, br);
}

Eigen::MatrixXd smooth_series(std::span<const LongitudinalSeries> series, const BasisSystem& basis) {
  const int K = basis.dimension();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(series.size()), K);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const auto m = s.times.size();
    if (s.values.size() != m)
      throw SmoothingError("location '" + s.id + "': times and values differ in length");
    if (m < static_cast<std::size_t>(K))
      throw SmoothingError("location '" + s.id + "' has " + std::to_string(m) +
                           " observations, fewer than the basis dimension " + std::to_string(K));
    Eigen::MatrixXd design(static_cast<Eigen::Index>(m), K);
    Eigen::VectorXd y(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      if (k > 0 && !(s.times[k] > s.times[k - 1]))
        throw SmoothingError("location '" + s.id + "': observation times must be strictly increasing");
      try {
        design.row(static_cast<Eigen::Index>(k)) = basis.evaluate(s.times[k]).transpose();
      } catch (const DomainError& e) {
        throw SmoothingError("location '" + s.id + "': " + e.what());
      }
      if (!std::isfinite(s.values[k]))
        throw SmoothingError("location '" + s.id + "' has a non-finite observation");
      y(static_cast<Eigen::Index>(k)) = s.values[k];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < K)
      throw SmoothingError("location '" + s.id + "': singular smoothing design (rank " +
                           std::to_string(qr.rank()) + " < " + std::to_string(K) + ")");
    A.row(static_cast<Eigen::Index>(i)) = qr.solve(y).transpose();
  }
  return A;
}

Eigen::MatrixXd gram_matrix(const BasisSystem& basis) {
  const int K = basis.dimension();
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(K, K);
  const auto rule = basis.product_quadrature();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    Eigen::VectorXd phi = basis.evaluate(rule.nodes[q]);
    psi.noalias() += rule.weights[q] * phi * phi.transpose();
  }
  return 0.5 * (psi + psi.transpose());
}

SymmetricRoots symmetric_roots(const Eigen::MatrixXd& spd) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spd);
  if (es.info() != Eigen::Success) throw DecompositionError("eigendecomposition of the Gram matrix failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double max_ev = ev.maxCoeff();
  const double min_ev = ev.minCoeff();
  if (!(max_ev > 0.0) || min_ev <= 1e-14 * max_ev) {
    std::ostringstream os;
    os.precision(6);
    os << "Gram matrix is numerically singular (smallest eigenvalue " << min_ev << ", largest " << max_ev
       << ")";
    throw DecompositionError(os.str());
  }
  Eigen::VectorXd floored = ev.cwiseMax(1e-12 * max_ev);
  SymmetricRoots r;
  r.min_eigenvalue = min_ev;
  r.sqrt = es.eigenvectors() * floored.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  r.inv_sqrt = es.eigenvectors() * floored.cwiseSqrt().cwiseInverse().asDiagonal() *
               es.eigenvectors().transpose();
  return r;
}

double FunctionalDesign::cumulative_inertia(int j) const {
  if (j < 0 || j > dimension()) throw IndexError("inertia index out of range");
  const double total = eigenvalues.sum();
  if (j == dimension()) return 1.0;
  if (total <= 0.0) return 1.0;
  return eigenvalues.head(j).sum() / total;
}

FunctionalDesign functional_pca(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& gram) {
  const auto n = coefficients.rows();
  const auto K = coefficients.cols();
  if (n < 1) throw DecompositionError("functional PCA needs at least one curve");
  if (gram.rows() != K || gram.cols() != K)
    throw DecompositionError("Gram matrix dimension does not match the coefficient matrix");

  FunctionalDesign d;
  d.coefficients = coefficients;
  d.gram = gram;
  d.mean_coeffs = coefficients.colwise().mean().transpose();
  Eigen::MatrixXd centered = coefficients.rowwise() - d.mean_coeffs.transpose();

  const auto roots = symmetric_roots(gram);
  Eigen::MatrixXd W = centered * roots.sqrt;
  Eigen::MatrixXd cov = (W.transpose() * W) / static_cast<double>(n);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw DecompositionError("eigendecomposition of the covariance failed");

  d.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd G = es.eigenvectors().rowwise().reverse();
  // Fix the sign so the largest-magnitude entry of each eigenvector is positive.
  for (Eigen::Index j = 0; j < K; ++j) {
    Eigen::Index arg = 0;
    G.col(j).cwiseAbs().maxCoeff(&arg);
    if (G(arg, j) < 0.0) G.col(j) = -G.col(j);
  }
  d.eigenvectors = roots.inv_sqrt * G;
  d.scores = centered * gram * d.eigenvectors;
  return d;
}

double eigenfunction_eval(const FunctionalDesign& design, const BasisSystem& basis, int j, double t) {
  if (j < 1 || j > design.dimension())
    throw IndexError("eigenfunction index " + std::to_string(j) + " outside 1.." +
                     std::to_string(design.dimension()));
  if (basis.dimension() != design.eigenvectors.rows())
    throw IndexError("basis dimension does not match the functional design");
  return basis.evaluate(t).dot(design.eigenvectors.col(j - 1));
}

double curve_eval(const FunctionalDesign& design, const BasisSystem& basis, std::size_t row, double t) {
  if (row >= static_cast<std::size_t>(design.coefficients.rows())) throw IndexError("curve row out of range");
  return basis.evaluate(t).dot(design.coefficients.row(static_cast<Eigen::Index>(row)).transpose());
}

}  // namespace fmasss::fda
