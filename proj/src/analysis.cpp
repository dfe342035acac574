#include "fmasss/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fmasss/error.hpp"

namespace fmasss {

AdjustmentMode adjustment_from_name(const std::string& name) {
  if (name == "none") return AdjustmentMode::None;
  if (name == "univariate") return AdjustmentMode::Univariate;
  if (name == "multivariate") return AdjustmentMode::Multivariate;
  if (name == "functional") return AdjustmentMode::Functional;
  throw ConfigError("unknown adjustment mode '" + name +
                    "' (expected none, univariate, multivariate or functional)");
}

std::string adjustment_name(AdjustmentMode mode) {
  switch (mode) {
    case AdjustmentMode::None: return "none";
    case AdjustmentMode::Univariate: return "univariate";
    case AdjustmentMode::Multivariate: return "multivariate";
    case AdjustmentMode::Functional: return "functional";
  }
  return "none";
}

fda::BasisSystem BasisOptions::build(std::span<const fda::LongitudinalSeries> series) const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    if (s.times.empty()) continue;
    lo = std::min(lo, s.times.front());
    hi = std::max(hi, s.times.back());
  }
  if (lower) lo = *lower;
  if (upper) hi = *upper;
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
    throw ConfigError("cannot determine the basis domain from the longitudinal data");
  if (kind == "bspline") return fda::BasisSystem::bspline_uniform(degree, knot_count, lo, hi);
  if (kind == "fourier") return fda::BasisSystem::fourier(lo, hi - lo, fourier_dimension);
  throw ConfigError("unknown basis kind '" + kind + "' (expected bspline or fourier)");
}

namespace {

double summarize(const fda::LongitudinalSeries& s, SummaryStatistic stat) {
  if (s.values.empty()) throw ConfigError("location '" + s.id + "' has no longitudinal observations");
  if (stat == SummaryStatistic::Mean) {
    double sum = 0.0;
    for (double v : s.values) sum += v;
    return sum / static_cast<double>(s.values.size());
  }
  std::vector<double> v = s.values;
  std::sort(v.begin(), v.end());
  const auto m = v.size();
  return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

// A covariate without spatial variation is absorbed by the intercept.
bool is_constant(const Eigen::VectorXd& v) {
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  return v.maxCoeff() - v.minCoeff() <= 1e-12 * scale;
}

void drop_degenerate_scores(CovariateDesign& d, double coefficient_energy) {
  if (d.eigenvalues.size() == 0) return;
  if (d.eigenvalues.sum() <= 1e-20 * std::max(1.0, coefficient_energy)) {
    d.scores = Eigen::MatrixXd(d.scores.rows(), 0);
    d.eigenvalues = Eigen::VectorXd(0);
  }
}

}  // namespace

CovariateDesign build_covariates(AdjustmentMode mode, const Eigen::MatrixXd& scalar,
                                 const std::vector<std::string>& scalar_names,
                                 std::span<const fda::LongitudinalSeries> series, const AnalysisOptions& options) {
  CovariateDesign d;
  d.scalar = scalar;
  d.scalar_names = scalar_names;
  const auto n = scalar.rows();

  if (mode != AdjustmentMode::None && static_cast<Eigen::Index>(series.size()) != n)
    throw ConfigError("adjustment mode '" + adjustment_name(mode) +
                      "' needs one longitudinal series per location");

  switch (mode) {
    case AdjustmentMode::None:
      break;
    case AdjustmentMode::Univariate: {
      Eigen::VectorXd summary(n);
      for (Eigen::Index i = 0; i < n; ++i) summary(i) = summarize(series[i], options.summary);
      if (is_constant(summary)) break;
      Eigen::MatrixXd z(n, scalar.cols() + 1);
      if (scalar.cols() > 0) z.leftCols(scalar.cols()) = scalar;
      z.col(scalar.cols()) = summary;
      d.scalar = std::move(z);
      d.scalar_names.push_back(options.summary == SummaryStatistic::Mean ? "series_mean" : "series_median");
      break;
    }
    case AdjustmentMode::Multivariate: {
      const auto& grid = series.front().times;
      for (const auto& s : series)
        if (s.times != grid)
          throw ConfigError("multivariate adjustment needs a common time grid; location '" + s.id +
                            "' differs (use functional adjustment for irregular grids)");
      const auto m = static_cast<Eigen::Index>(grid.size());
      Eigen::MatrixXd raw(n, m);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < m; ++k) raw(i, k) = series[i].values[k];
      auto pca = fda::functional_pca(raw, Eigen::MatrixXd::Identity(m, m));
      d.scores = pca.scores;
      d.eigenvalues = pca.eigenvalues;
      d.functional = std::move(pca);
      drop_degenerate_scores(d, raw.squaredNorm() / static_cast<double>(n));
      break;
    }
    case AdjustmentMode::Functional: {
      auto basis = options.basis.build(series);
      Eigen::MatrixXd A = fda::smooth_series(series, basis);
      auto fd = fda::functional_pca(A, fda::gram_matrix(basis));
      d.scores = fd.scores;
      d.eigenvalues = fd.eigenvalues;
      d.basis = std::move(basis);
      d.functional = std::move(fd);
      drop_degenerate_scores(d, A.squaredNorm() / static_cast<double>(n));
      break;
    }
  }
  if (d.scores.rows() == 0) d.scores = Eigen::MatrixXd(n, 0);
  if (d.scalar.rows() == 0) d.scalar = Eigen::MatrixXd(n, 0);
  return d;
}

AnalysisResult analyze(const Eigen::VectorXd& y, const Eigen::VectorXd& populations, const Eigen::MatrixXd& scalar,
                       const std::vector<std::string>& scalar_names,
                       std::span<const fda::LongitudinalSeries> series, const geo::WindowSet& windows,
                       const AnalysisOptions& options) {
  const auto n = y.size();
  if (static_cast<std::size_t>(n) != windows.location_count)
    throw ConfigError("outcome vector and window set disagree on the number of locations");
  Eigen::MatrixXd Z = scalar.rows() == n ? scalar : Eigen::MatrixXd(n, 0);

  AnalysisResult r;
  r.design = build_covariates(options.mode, Z, scalar_names, series, options);

  auto& model = r.model;
  model.family = options.family;
  model.scalar_covariates = r.design.scalar;
  model.scores = r.design.scores;
  if (options.family.kind == glm::FamilyKind::Poisson) {
    if (populations.size() != n) throw ConfigError("Poisson model needs one population per location");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(populations(i) > 0.0)) throw InputError("populations must be > 0 for the Poisson model");
    model.populations = populations;
    model.base_offset = populations.array().log().matrix();
  } else {
    model.base_offset = Eigen::VectorXd::Zero(n);
  }

  if (r.design.scores.cols() > 0) {
    r.selection = glm::select_truncation(y, model.scalar_covariates, model.scores, r.design.eigenvalues,
                                         model.family, model.base_offset, options.inertia_cap);
    model.J = r.selection->J;
  }

  r.null_fit = glm::fit_null(model, y);
  r.scan = scan::run_scan(windows, y, r.null_fit, model.family, options.monte_carlo.scan);
  r.monte_carlo = scan::monte_carlo_pvalues(windows, model, r.null_fit, r.scan, options.monte_carlo);
  r.mlc_p_value = r.monte_carlo.p_value;
  r.clusters = scan::secondary_clusters(windows, r.scan, r.monte_carlo, options.level, &r.null_fit);
  return r;
}

}  // namespace fmasss
