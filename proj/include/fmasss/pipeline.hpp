#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmasss/analysis.hpp"
#include "fmasss/fda.hpp"
#include "fmasss/geo.hpp"

namespace fmasss {

inline constexpr const char* kVersion = "0.1.0";

/// Settings for one analysis run. Serializes to and from a flat JSON object
/// whose keys are the member names.
struct RunConfig {
  std::string locations;   ///< id,x,y
  std::string counts;      ///< id,cases[,population]
  std::string covariates;  ///< id,z1..zp (optional)
  std::string series;      ///< id,t,value (optional)

  std::string basis = "bspline";
  int degree = 3;
  int knots = 13;
  std::optional<double> t_min;
  std::optional<double> t_max;
  int fourier_dimension = 5;

  double inertia_cap = 0.95;
  double max_fraction = 0.5;
  std::string window_cap = "locations";  ///< or "population"
  std::string family = "poisson";
  int monte_carlo = 999;
  double level = 0.05;
  std::uint64_t seed = 1;
  std::string mode = "functional";
  std::string sidedness = "two-sided";
  std::string summary = "mean";
  bool refit_null = true;
  unsigned threads = 0;
  std::string output = "fmasss-out";

  /// Throws ConfigError on out-of-range values or unknown names.
  void validate() const;
  AnalysisOptions analysis_options() const;
  /// Basis dimension K implied by the basis settings.
  int basis_dimension() const;
};

/// JSON text of every RunConfig key.
std::string config_to_json(const RunConfig& config);
/// Unknown keys are rejected.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

struct StudyRegion {
  std::vector<geo::Location> locations;
  Eigen::VectorXd cases;
  Eigen::VectorXd populations;  ///< empty when the counts file has no population column
  Eigen::MatrixXd covariates;   ///< n x p
  std::vector<std::string> covariate_names;
  std::vector<fda::LongitudinalSeries> series;  ///< one per location, in location order, or empty

  std::size_t size() const { return locations.size(); }
  std::vector<std::size_t> series_lengths() const;
};

/// Reads and joins all input tables on location id. Row order of the
/// locations file defines the location index.
StudyRegion ingest(const RunConfig& config);

struct PipelineResult {
  StudyRegion region;
  geo::WindowSet windows;
  AnalysisResult analysis;
  std::vector<std::string> files;  ///< written outputs, relative to the output directory
};

/// Full analysis for `config.mode`; writes clusters.csv, clusters.geojson,
/// replicates.csv, theta.csv (functional mode) and manifest.json.
PipelineResult run_pipeline(const RunConfig& config);

/// Same as run_pipeline on an already ingested region, writing into `dir`.
PipelineResult run_analysis(const RunConfig& config, StudyRegion region, const std::filesystem::path& dir);

struct ModeOutcome {
  std::string mode;
  bool ok = false;
  std::string error;
  std::vector<scan::ClusterReport> clusters;
  std::vector<std::string> mlc_member_ids;
  double mlc_llr = 0.0;
  double mlc_p_value = 1.0;
};

struct Comparison {
  std::vector<ModeOutcome> modes;
  bool all_ok() const;
};

/// Runs none, univariate, multivariate and functional adjustment on the same
/// data and seed. Each mode writes into <output>/<mode>/; the combined table
/// goes to <output>/comparison.csv. A failing mode does not stop the others.
Comparison compare_models(const RunConfig& config);

/// Member id sets of a clusters.csv file, in row order.
std::vector<std::vector<std::string>> read_cluster_csv(const std::filesystem::path& path);

/// Writes every window as window,center_id,radius,n_members,member_ids.
void write_windows_csv(const geo::WindowSet& windows, std::span<const geo::Location> locations,
                       const std::filesystem::path& path);

/// Machine-readable error report.
void write_error_json(const std::filesystem::path& path, const std::string& kind, const std::string& message);

}  // namespace fmasss
