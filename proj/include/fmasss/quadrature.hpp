#pragma once

#include <span>
#include <vector>

namespace fmasss {

/// A set of nodes and weights approximating an integral over some interval.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <typename F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += weights[q] * f(nodes[q]);
    return s;
  }
};

/// n-point Gauss-Legendre rule on [a, b]; exact for polynomials of degree 2n-1.
QuadratureRule gauss_legendre(int n, double a, double b);

/// Applies an n-point Gauss-Legendre rule on every consecutive pair of
/// breakpoints.
QuadratureRule composite_gauss_legendre(int n, std::span<const double> breakpoints);

}  // namespace fmasss
