#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/geo.hpp"
#include "fmasss/glm.hpp"
#include "fmasss/random.hpp"

namespace fmasss::scan {

/// Which departures from the null compete for the maximum.
enum class Sidedness {
  TwoSided,  ///< high- and low-risk windows together
  High,      ///< only windows with delta > 0
  Low,       ///< only windows with delta < 0
};

Sidedness sidedness_from_name(const std::string& name);
std::string sidedness_name(Sidedness s);

struct WindowFit {
  std::size_t window = 0;
  double alpha = 0.0;  ///< intercept under H1
  double delta = 0.0;  ///< log relative risk; +/-inf on degenerate windows
  double llr = 0.0;
  double inside_observed = 0.0;  ///< O^(k)
  /// Poisson: adjusted population inside (N~^(k)). Other families: the sum
  /// of null fitted means inside.
  double inside_adjusted = 0.0;
  bool valid = true;  ///< false when a numeric fit did not converge
};

struct ScanResult {
  std::vector<WindowFit> fits;
  std::size_t mlc = 0;  ///< index into fits (and into the window set)
  double lambda = 0.0;
  std::size_t invalid_windows = 0;

  const WindowFit& most_likely() const { return fits.at(mlc); }
};

/// Kulldorff-form Poisson log-likelihood ratio with 0 log 0 = 0.
double poisson_llr(double inside_obs, double inside_pop, double total_obs, double total_pop);

/// Closed-form Poisson fit of one window against adjusted populations.
/// Throws InvalidWindowError when the window covers every location.
WindowFit poisson_window_fit(const geo::PotentialCluster& window, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& adjusted_populations, std::size_t index = 0);

/// Numeric maximization over (alpha, delta) with the covariate effects held
/// as offsets. `null_loglik` and `dispersion` come from the null fit. With
/// `fixed_delta`, only alpha is estimated.
WindowFit generic_window_fit(const geo::PotentialCluster& window, const Eigen::VectorXd& y,
                             const glm::Family& family, const Eigen::VectorXd& fixed_offsets,
                             double null_loglik, double dispersion = 1.0,
                             std::optional<double> fixed_delta = std::nullopt, std::size_t index = 0);

struct ScanOptions {
  Sidedness sidedness = Sidedness::TwoSided;
  /// Poisson only: use the closed form (default) or the numeric path.
  bool poisson_closed_form = true;
  /// Worker threads for the numeric path (0 = hardware concurrency).
  unsigned threads = 0;
};

/// Fits every window and picks the most likely cluster. Ties in LLR go to
/// the window with fewer members, then the lower center index.
ScanResult run_scan(const geo::WindowSet& windows, const Eigen::VectorXd& y, const glm::NullFit& null_fit,
                    const glm::Family& family, const ScanOptions& options = {});

/// (1 + #{replicates >= lambda}) / (M + 1).
double dwass_pvalue(double lambda, std::span<const double> replicate_lambdas);

struct MonteCarloOptions {
  int replicates = 999;
  std::uint64_t seed = 1;
  /// true: refit the whole null model on every replicate. false: keep the
  /// observed covariate offsets frozen and only re-estimate the intercept.
  bool refit_null = true;
  ScanOptions scan;
  unsigned threads = 0;
};

struct MonteCarloResult {
  std::vector<double> replicate_lambdas;
  double p_value = 1.0;  ///< of the observed lambda
  int resampled_replicates = 0;
  int failed_replicates = 0;  ///< counted as +inf
};

/// Draws outcomes from the fitted null distribution, refits, rescans and
/// ranks the observed statistic. Replicate m uses its own stream derived
/// from (seed, m), so the result does not depend on thread scheduling.
MonteCarloResult monte_carlo_pvalues(const geo::WindowSet& windows, const glm::NullModel& model,
                                     const glm::NullFit& null_fit, const ScanResult& observed,
                                     const MonteCarloOptions& options);

/// Samples one outcome vector from the fitted null.
Eigen::VectorXd draw_null_outcomes(const glm::Family& family, const glm::NullFit& fit, Rng& rng);

struct ClusterReport {
  int rank = 0;
  std::size_t window = 0;
  int center = 0;
  std::vector<int> members;
  double radius = 0.0;
  double relative_risk = 1.0;
  double llr = 0.0;
  double p_value = 1.0;
  double observed = 0.0;
  double expected = 0.0;  ///< under H0 (fitted means summed over members)
};

/// Greedy selection in decreasing LLR of windows disjoint from all previously
/// reported ones with p-value <= threshold. The first entry, if any, is the MLC.
std::vector<ClusterReport> secondary_clusters(const geo::WindowSet& windows, const ScanResult& scan,
                                              const MonteCarloResult& mc, double threshold,
                                              const glm::NullFit* null_fit = nullptr);

}  // namespace fmasss::scan
