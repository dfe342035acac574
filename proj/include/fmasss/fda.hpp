#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/quadrature.hpp"

namespace fmasss::fda {

/// Repeated measurements of a covariate at one location.
struct LongitudinalSeries {
  std::string id;
  std::vector<double> times;   ///< strictly increasing
  std::vector<double> values;  ///< same length as times

  std::size_t size() const { return times.size(); }
};

/// B-spline basis of a given degree on the breakpoints (boundary knots
/// included). Boundary knots get multiplicity degree + 1, so the dimension is
/// breakpoints.size() - 1 + degree.
struct BSplineSpec {
  int degree = 3;
  std::vector<double> breakpoints;
};

/// Fourier basis on [start, start + period]: a constant, then sin/cos pairs
/// of increasing frequency, normalized to be orthonormal over one period.
struct FourierSpec {
  double start = 0.0;
  double period = 1.0;
  int dimension = 3;
};

class BasisSystem {
 public:
  static BasisSystem bspline(int degree, std::vector<double> breakpoints);
  /// Equally spaced breakpoints; `knot_count` includes both boundary knots.
  static BasisSystem bspline_uniform(int degree, int knot_count, double lo, double hi);
  static BasisSystem fourier(double start, double period, int dimension);

  int dimension() const { return dimension_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  bool is_bspline() const { return std::holds_alternative<BSplineSpec>(spec_); }
  const BSplineSpec* as_bspline() const { return std::get_if<BSplineSpec>(&spec_); }
  const FourierSpec* as_fourier() const { return std::get_if<FourierSpec>(&spec_); }

  /// Values of all K basis functions at t. Throws DomainError outside T.
  Eigen::VectorXd evaluate(double t) const;

  /// Quadrature over T that is exact for products of two basis functions in
  /// the B-spline case (and accurate to rounding for the Fourier case).
  QuadratureRule product_quadrature() const;

  /// Full knot vector (B-spline only; empty otherwise).
  std::vector<double> knot_vector() const;

 private:
  std::variant<BSplineSpec, FourierSpec> spec_;
  int dimension_ = 0;
  double lower_ = 0.0;
  double upper_ = 0.0;
  std::vector<double> knots_;
};

inline Eigen::VectorXd eval_basis(const BasisSystem& basis, double t) { return basis.evaluate(t); }

/// Least-squares coefficients of every series in the basis, one row per
/// series. Throws SmoothingError naming the location when its design is
/// singular or it has fewer than K observations.
Eigen::MatrixXd smooth_series(std::span<const LongitudinalSeries> series, const BasisSystem& basis);

/// Psi(j, r) = integral of phi_j * phi_r over T.
Eigen::MatrixXd gram_matrix(const BasisSystem& basis);

/// Output of the functional PCA. Eigen quantities are in the construction
/// basis: eigenfunction j is sum_l V(l, j) phi_l.
struct FunctionalDesign {
  Eigen::MatrixXd coefficients;  ///< A, n x K (uncentered)
  Eigen::VectorXd mean_coeffs;   ///< column means of A
  Eigen::MatrixXd gram;          ///< Psi
  Eigen::VectorXd eigenvalues;   ///< nonincreasing, >= 0
  Eigen::MatrixXd eigenvectors;  ///< V = Psi^{-1/2} G
  Eigen::MatrixXd scores;        ///< C = (A - mean) Psi V

  int dimension() const { return static_cast<int>(eigenvalues.size()); }
  /// Share of total inertia carried by the first j components (j in 1..K).
  double cumulative_inertia(int j) const;
};

/// PCA of (A - mean) Psi^{1/2}. Covariances use the 1/n normalization, so the
/// column variances of the scores equal the eigenvalues. Throws
/// DecompositionError when Psi is numerically singular.
FunctionalDesign functional_pca(const Eigen::MatrixXd& coefficients, const Eigen::MatrixXd& gram);

/// Value of eigenfunction j (1-based) at t.
double eigenfunction_eval(const FunctionalDesign& design, const BasisSystem& basis, int j, double t);

/// Smoothed (uncentered) curve of row i at t.
double curve_eval(const FunctionalDesign& design, const BasisSystem& basis, std::size_t row, double t);

/// Symmetric square root and inverse square root of an SPD matrix with the
/// eigenvalue floor used by functional_pca.
struct SymmetricRoots {
  Eigen::MatrixXd sqrt;
  Eigen::MatrixXd inv_sqrt;
  double min_eigenvalue = 0.0;
};
SymmetricRoots symmetric_roots(const Eigen::MatrixXd& spd);

}  // namespace fmasss::fda
