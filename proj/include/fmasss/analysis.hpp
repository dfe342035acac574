#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/fda.hpp"
#include "fmasss/geo.hpp"
#include "fmasss/glm.hpp"
#include "fmasss/scan.hpp"

namespace fmasss {

/// How the longitudinal covariate enters the null model.
enum class AdjustmentMode {
  None,          ///< ignored
  Univariate,    ///< one scalar summary (mean or median) per location
  Multivariate,  ///< one covariate per time point, reduced by PCA
  Functional,    ///< smoothed curves, functional PCA scores
};

AdjustmentMode adjustment_from_name(const std::string& name);
std::string adjustment_name(AdjustmentMode mode);

enum class SummaryStatistic { Mean, Median };

struct BasisOptions {
  std::string kind = "bspline";  ///< "bspline" or "fourier"
  int degree = 3;
  int knot_count = 13;  ///< includes both boundary knots
  std::optional<double> lower;  ///< defaults to the earliest observation time
  std::optional<double> upper;  ///< defaults to the latest observation time
  int fourier_dimension = 5;

  fda::BasisSystem build(std::span<const fda::LongitudinalSeries> series) const;
};

struct AnalysisOptions {
  AdjustmentMode mode = AdjustmentMode::Functional;
  glm::Family family = glm::Family::poisson();
  double inertia_cap = 0.95;
  BasisOptions basis;
  SummaryStatistic summary = SummaryStatistic::Mean;
  scan::MonteCarloOptions monte_carlo;
  double level = 0.05;
};

/// Covariates entering the null model for one adjustment mode.
struct CovariateDesign {
  Eigen::MatrixXd scalar;  ///< Z (user covariates, plus the summary in univariate mode)
  std::vector<std::string> scalar_names;
  Eigen::MatrixXd scores;  ///< PCA / FPCA scores (empty unless multivariate or functional)
  Eigen::VectorXd eigenvalues;
  std::optional<fda::BasisSystem> basis;         ///< functional mode only
  std::optional<fda::FunctionalDesign> functional;  ///< functional and multivariate modes
};

/// Builds the covariate design. Multivariate mode needs every series on the
/// same time grid and throws ConfigError otherwise.
CovariateDesign build_covariates(AdjustmentMode mode, const Eigen::MatrixXd& scalar,
                                 const std::vector<std::string>& scalar_names,
                                 std::span<const fda::LongitudinalSeries> series, const AnalysisOptions& options);

struct AnalysisResult {
  CovariateDesign design;
  std::optional<glm::TruncationSelection> selection;
  glm::NullModel model;
  glm::NullFit null_fit;
  scan::ScanResult scan;
  scan::MonteCarloResult monte_carlo;
  std::vector<scan::ClusterReport> clusters;  ///< significant, disjoint, MLC first
  double mlc_p_value = 1.0;
};

/// Full procedure: covariates, truncation choice, null fit, scan, Monte Carlo
/// and cluster reporting. `populations` is only read by the Poisson family.
AnalysisResult analyze(const Eigen::VectorXd& y, const Eigen::VectorXd& populations,
                       const Eigen::MatrixXd& scalar, const std::vector<std::string>& scalar_names,
                       std::span<const fda::LongitudinalSeries> series, const geo::WindowSet& windows,
                       const AnalysisOptions& options);

}  // namespace fmasss
