#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/analysis.hpp"
#include "fmasss/fda.hpp"
#include "fmasss/france94.hpp"
#include "fmasss/random.hpp"

namespace fmasss::sim {

/// max(6 - |t - 11|, 0)
double tent(double t);

/// Unscaled parameter function (t/9) sin(pi t / 9 + pi).
double theta_shape(double t);

/// The `size` locations nearest to `center_id` (center included, ties by index).
std::vector<int> nearest_cluster(const Geometry& geometry, const std::string& center_id, int size);

struct SimulationConfig {
  Geometry geometry = france94();
  std::vector<int> true_cluster;  ///< empty: 8 locations around "86"
  std::vector<int> fake_cluster;  ///< empty: 8 locations around "54"

  std::vector<double> relative_risks{1.0, 1.2, 1.4, 1.6, 1.8, 2.0};
  int replicates = 200;
  int monte_carlo = 99;
  double level = 0.05;
  std::vector<AdjustmentMode> modes{AdjustmentMode::Univariate, AdjustmentMode::Multivariate,
                                    AdjustmentMode::Functional};

  int time_points = 70;
  double t_lower = 0.0;
  double t_upper = 21.0;
  double noise_sd = 0.25;
  double alpha = -11.51;

  /// false: theta = 0, so the curves do not affect the outcome.
  bool covariate_effect = true;
  /// Multiplier on theta_shape. Unset: calibrated so that the expected
  /// incidence inside the fake cluster is `fake_ratio` times the outside one.
  std::optional<double> theta_scale;
  double fake_ratio = 2.0;

  int knot_count = 13;
  int degree = 3;
  double inertia_cap = 0.95;
  double max_fraction = 0.5;
  bool refit_null = true;
  std::uint64_t seed = 20190501;
  unsigned threads = 0;

  /// Fills default clusters and checks ranges; throws ConfigError.
  void finalize();
};

/// Integrals of the three noise-free curve components against theta_shape:
/// h(t), h(t + 4) (outside the fake cluster) and h(t - 4) (inside).
struct CurveIntegrals {
  double tent = 0.0;
  double outside = 0.0;
  double inside = 0.0;
};

CurveIntegrals curve_integrals(double lower = 0.0, double upper = 21.0);

/// Expected incidence ratio, fake cluster over outside, at theta scale
/// `kappa`, averaging over U ~ Uniform(0, 1).
double fake_cluster_ratio(double kappa, const CurveIntegrals& integrals = curve_integrals());

/// Scale that gives the requested inside/outside ratio (>= 1).
double calibrate_theta_scale(double ratio, const CurveIntegrals& integrals = curve_integrals());

/// Effective theta multiplier for a config (0 when covariate_effect is off).
double effective_theta_scale(const SimulationConfig& config);

struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd populations;
  Eigen::VectorXd mu;
  Eigen::VectorXd covariate_integral;  ///< integral of the noise-free curve times theta
  std::vector<double> u;
  std::vector<fda::LongitudinalSeries> series;
};

Dataset generate_dataset(const SimulationConfig& config, double exp_delta, Rng& rng);

/// Writes locations.csv, counts.csv and series.csv for the CLI.
void write_fixture(const Dataset& data, const Geometry& geometry, const std::filesystem::path& dir);

struct OverlapRates {
  double tp = 0.0;  ///< |MLC and target| / |target|
  double fp = 0.0;  ///< |MLC minus target| / (n - |target|)
  bool intersects = false;
};

OverlapRates overlap(const std::vector<int>& mlc, const std::vector<int>& target, std::size_t n);

struct ReplicateRecord {
  std::string mode;
  double exp_delta = 1.0;
  int replicate = 0;
  bool ok = true;
  std::string error;
  int J = 0;
  double lambda = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::vector<int> mlc;
  OverlapRates true_rates;
  OverlapRates fake_rates;
};

/// One row of the power table.
struct SimMetrics {
  std::string mode;
  double exp_delta = 1.0;
  std::string target;  ///< "true" or "fake"
  double power = 0.0;
  double tp = 0.0;  ///< averaged over all replicates
  double fp = 0.0;
  double tp_sig_zero = 0.0;  ///< non-significant replicates count as 0
  double fp_sig_zero = 0.0;
  double tp_sig_only = 0.0;  ///< averaged over significant replicates only
  double fp_sig_only = 0.0;
  int replicates = 0;
  int significant = 0;
  int failures = 0;
};

struct StudyResult {
  double theta_scale = 0.0;
  std::vector<SimMetrics> metrics;
  std::vector<ReplicateRecord> details;

  const SimMetrics& find(const std::string& mode, double exp_delta, const std::string& target) const;
};

using Progress = std::function<void(const std::string&)>;

/// Every (relative risk, replicate) dataset is shared by all modes. Failed
/// analyses count as non-detections and are tallied in `failures`.
StudyResult run_study(SimulationConfig config, const Progress& progress = {});

void write_power_curves(const StudyResult& result, const std::filesystem::path& path);
void write_replicate_details(const StudyResult& result, const Geometry& geometry,
                             const std::filesystem::path& path);

}  // namespace fmasss::sim
