#include "fmasss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fmasss/csv.hpp"
#include "fmasss/error.hpp"

namespace fmasss {

using Json = nlohmann::ordered_json;

namespace {

const std::set<std::string> kConfigKeys{
    "locations", "counts",      "covariates",   "series",     "basis",   "degree",     "knots",
    "t_min",     "t_max",       "fourier_dimension", "inertia_cap", "max_fraction", "window_cap", "family",
    "monte_carlo", "level",     "seed",         "mode",       "sidedness", "summary",  "refit_null",
    "threads",   "output"};

Json config_object(const RunConfig& c) {
  Json j;
  j["locations"] = c.locations;
  j["counts"] = c.counts;
  j["covariates"] = c.covariates;
  j["series"] = c.series;
  j["basis"] = c.basis;
  j["degree"] = c.degree;
  j["knots"] = c.knots;
  j["t_min"] = c.t_min ? Json(*c.t_min) : Json(nullptr);
  j["t_max"] = c.t_max ? Json(*c.t_max) : Json(nullptr);
  j["fourier_dimension"] = c.fourier_dimension;
  j["inertia_cap"] = c.inertia_cap;
  j["max_fraction"] = c.max_fraction;
  j["window_cap"] = c.window_cap;
  j["family"] = c.family;
  j["monte_carlo"] = c.monte_carlo;
  j["level"] = c.level;
  j["seed"] = c.seed;
  j["mode"] = c.mode;
  j["sidedness"] = c.sidedness;
  j["summary"] = c.summary;
  j["refit_null"] = c.refit_null;
  j["threads"] = c.threads;
  j["output"] = c.output;
  return j;
}

template <typename T>
void take(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void take_optional(const Json& j, const char* key, std::optional<double>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  take(j, key, v);
  out = v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::string join_ids(const std::vector<int>& members, std::span<const geo::Location> locations) {
  std::string s;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (k) s += ';';
    s += locations[static_cast<std::size_t>(members[k])].id;
  }
  return s;
}

std::string list_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) s += ", ";
    if (k == 20) {
      s += "... (" + std::to_string(ids.size()) + " total)";
      break;
    }
    s += ids[k];
  }
  return s;
}

// Maps each row of `table` to a location index; every location must appear
// exactly once unless `allow_repeats` (long-format series).
std::vector<int> join_rows(const csv::Table& table, const std::map<std::string, int>& index, bool allow_repeats) {
  const auto c_id = table.column("id");
  std::vector<int> out(table.rows.size());
  std::vector<std::string> unknown, duplicate, missing;
  std::vector<int> seen(index.size(), 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& id = table.rows[r][c_id];
    auto it = index.find(id);
    if (it == index.end()) {
      if (std::find(unknown.begin(), unknown.end(), id) == unknown.end()) unknown.push_back(id);
      out[r] = -1;
      continue;
    }
    if (seen[static_cast<std::size_t>(it->second)]++ && !allow_repeats) duplicate.push_back(id);
    out[r] = it->second;
  }
  for (const auto& [id, i] : index)
    if (!seen[static_cast<std::size_t>(i)]) missing.push_back(id);
  if (!duplicate.empty()) throw IngestionError(table.source + ": duplicate ids: " + list_ids(duplicate));
  if (!missing.empty()) throw IngestionError(table.source + ": missing ids: " + list_ids(missing));
  if (!unknown.empty()) throw IngestionError(table.source + ": ids not in the locations file: " + list_ids(unknown));
  return out;
}

void check_series_lengths(const StudyRegion& region, int K) {
  std::vector<std::string> short_ids;
  for (const auto& s : region.series)
    if (static_cast<int>(s.times.size()) < K) short_ids.push_back(s.id + " (m=" + std::to_string(s.times.size()) + ")");
  if (!short_ids.empty())
    throw IngestionError("functional adjustment needs at least K=" + std::to_string(K) +
                         " observations per location; too few at: " + list_ids(short_ids));
}

bool needs_series(AdjustmentMode mode) { return mode != AdjustmentMode::None; }

Json cluster_json(const scan::ClusterReport& c, std::span<const geo::Location> locations) {
  Json ids = Json::array();
  for (int m : c.members) ids.push_back(locations[static_cast<std::size_t>(m)].id);
  Json j;
  j["cluster_rank"] = c.rank;
  j["center_id"] = locations[static_cast<std::size_t>(c.center)].id;
  j["n_members"] = c.members.size();
  j["member_ids"] = ids;
  j["radius"] = c.radius;
  j["relative_risk"] = c.relative_risk;
  j["llr"] = c.llr;
  j["p_value"] = c.p_value;
  j["observed"] = c.observed;
  j["expected"] = c.expected;
  return j;
}

std::vector<std::string> write_outputs(const RunConfig& config, const PipelineResult& r,
                                       const std::filesystem::path& dir) {
  std::vector<std::string> files;
  const auto& L = r.region.locations;
  const auto& a = r.analysis;
  auto f = csv::format_double;
  {
    std::ostringstream out;
    csv::Writer w(out);
    w.row({"cluster_rank", "center_id", "n_members", "member_ids", "relative_risk", "llr", "p_value"});
    for (const auto& c : a.clusters)
      w.row({std::to_string(c.rank), L[static_cast<std::size_t>(c.center)].id, std::to_string(c.members.size()),
             join_ids(c.members, L), f(c.relative_risk), f(c.llr), f(c.p_value)});
    write_text(dir / "clusters.csv", out.str());
    files.push_back("clusters.csv");
  }
  {
    Json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = Json::array();
    for (const auto& c : a.clusters) {
      Json coords = Json::array();
      for (int m : c.members) coords.push_back({L[static_cast<std::size_t>(m)].x, L[static_cast<std::size_t>(m)].y});
      Json feature;
      feature["type"] = "Feature";
      feature["geometry"] = {{"type", "MultiPoint"}, {"coordinates", coords}};
      feature["properties"] = cluster_json(c, L);
      fc["features"].push_back(feature);
    }
    write_text(dir / "clusters.geojson", fc.dump(2) + "\n");
    files.push_back("clusters.geojson");
  }
  {
    std::ostringstream out;
    csv::Writer w(out);
    w.row({"replicate", "lambda"});
    for (std::size_t m = 0; m < a.monte_carlo.replicate_lambdas.size(); ++m)
      w.row({std::to_string(m + 1), f(a.monte_carlo.replicate_lambdas[m])});
    write_text(dir / "replicates.csv", out.str());
    files.push_back("replicates.csv");
  }
  if (a.design.basis && a.design.functional) {
    const auto& basis = *a.design.basis;
    std::vector<double> grid(201);
    for (std::size_t k = 0; k < grid.size(); ++k)
      grid[k] = basis.lower() + (basis.upper() - basis.lower()) * static_cast<double>(k) / 200.0;
    grid.back() = basis.upper();
    const auto theta = glm::parameter_function(a.null_fit, *a.design.functional, basis, grid);
    std::ostringstream out;
    csv::Writer w(out);
    w.row({"t", "theta"});
    for (const auto& p : theta) w.row({f(p.t), f(p.value)});
    write_text(dir / "theta.csv", out.str());
    files.push_back("theta.csv");
  }
  (void)config;
  return files;
}

Json manifest_base(const RunConfig& config) {
  Json m;
  m["tool"] = "fmasss";
  m["version"] = kVersion;
  m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
  m["config"] = config_object(config);
  m["seed"] = config.seed;
  return m;
}

Json analysis_manifest(const PipelineResult& r) {
  const auto& a = r.analysis;
  const auto& L = r.region.locations;
  Json m;
  m["n_locations"] = r.region.size();
  m["n_windows"] = r.windows.size();
  m["series_lengths"] = r.region.series_lengths();
  m["J"] = a.null_fit.J;
  Json candidates = Json::array();
  if (a.selection)
    for (const auto& c : a.selection->candidates) {
      Json cj;
      cj["J"] = c.J;
      cj["cumulative_inertia"] = c.cumulative_inertia;
      cj["aic"] = c.aic ? Json(*c.aic) : Json(nullptr);
      cj["loglik"] = c.loglik ? Json(*c.loglik) : Json(nullptr);
      cj["error"] = c.error;
      candidates.push_back(cj);
    }
  m["truncation_candidates"] = candidates;
  Json nf;
  nf["alpha"] = a.null_fit.alpha;
  nf["beta"] = std::vector<double>(a.null_fit.beta.data(), a.null_fit.beta.data() + a.null_fit.beta.size());
  nf["theta"] = std::vector<double>(a.null_fit.theta.data(), a.null_fit.theta.data() + a.null_fit.theta.size());
  nf["covariate_names"] = a.design.scalar_names;
  nf["loglik"] = a.null_fit.loglik;
  nf["dispersion"] = a.null_fit.dispersion;
  m["null_fit"] = nf;
  const auto& w = r.windows.windows[a.scan.mlc];
  const auto& fit = a.scan.most_likely();
  Json mlc;
  mlc["center_id"] = L[static_cast<std::size_t>(w.center)].id;
  Json ids = Json::array();
  for (int k : w.members) ids.push_back(L[static_cast<std::size_t>(k)].id);
  mlc["member_ids"] = ids;
  mlc["llr"] = fit.llr;
  mlc["relative_risk"] = std::exp(fit.delta);
  mlc["p_value"] = a.mlc_p_value;
  m["mlc"] = mlc;
  m["lambda"] = a.scan.lambda;
  m["invalid_windows"] = a.scan.invalid_windows;
  m["monte_carlo"] = {{"replicates", a.monte_carlo.replicate_lambdas.size()},
                      {"resampled", a.monte_carlo.resampled_replicates},
                      {"failed", a.monte_carlo.failed_replicates}};
  m["reported_clusters"] = a.clusters.size();
  return m;
}

}  // namespace

void RunConfig::validate() const {
  if (locations.empty()) throw ConfigError("'locations' file is required");
  if (counts.empty()) throw ConfigError("'counts' file is required");
  if (basis != "bspline" && basis != "fourier") throw ConfigError("basis must be 'bspline' or 'fourier'");
  if (degree < 0 || degree > 20) throw ConfigError("degree must lie in [0, 20]");
  if (knots < 2) throw ConfigError("knots must be >= 2");
  if (fourier_dimension < 1) throw ConfigError("fourier_dimension must be >= 1");
  if (t_min && t_max && !(*t_max > *t_min)) throw ConfigError("t_max must exceed t_min");
  if (!(inertia_cap > 0.0 && inertia_cap <= 1.0)) throw ConfigError("inertia_cap must lie in (0, 1]");
  if (!(max_fraction > 0.0 && max_fraction <= 0.5)) throw ConfigError("max_fraction must lie in (0, 0.5]");
  if (window_cap != "locations" && window_cap != "population")
    throw ConfigError("window_cap must be 'locations' or 'population'");
  glm::Family::from_name(family);
  if (monte_carlo < 1) throw ConfigError("monte_carlo must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  adjustment_from_name(mode);
  scan::sidedness_from_name(sidedness);
  if (summary != "mean" && summary != "median") throw ConfigError("summary must be 'mean' or 'median'");
  if (output.empty()) throw ConfigError("'output' directory is required");
}

int RunConfig::basis_dimension() const { return basis == "fourier" ? fourier_dimension : knots - 1 + degree; }

AnalysisOptions RunConfig::analysis_options() const {
  AnalysisOptions o;
  o.mode = adjustment_from_name(mode);
  o.family = glm::Family::from_name(family);
  o.inertia_cap = inertia_cap;
  o.basis.kind = basis;
  o.basis.degree = degree;
  o.basis.knot_count = knots;
  o.basis.lower = t_min;
  o.basis.upper = t_max;
  o.basis.fourier_dimension = fourier_dimension;
  o.summary = summary == "median" ? SummaryStatistic::Median : SummaryStatistic::Mean;
  o.monte_carlo.replicates = monte_carlo;
  o.monte_carlo.seed = seed;
  o.monte_carlo.refit_null = refit_null;
  o.monte_carlo.threads = threads;
  o.monte_carlo.scan.sidedness = scan::sidedness_from_name(sidedness);
  o.monte_carlo.scan.threads = threads;
  o.level = level;
  return o;
}

std::string config_to_json(const RunConfig& config) { return config_object(config).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid JSON config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kConfigKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  RunConfig c;
  take(j, "locations", c.locations);
  take(j, "counts", c.counts);
  take(j, "covariates", c.covariates);
  take(j, "series", c.series);
  take(j, "basis", c.basis);
  take(j, "degree", c.degree);
  take(j, "knots", c.knots);
  take_optional(j, "t_min", c.t_min);
  take_optional(j, "t_max", c.t_max);
  take(j, "fourier_dimension", c.fourier_dimension);
  take(j, "inertia_cap", c.inertia_cap);
  take(j, "max_fraction", c.max_fraction);
  take(j, "window_cap", c.window_cap);
  take(j, "family", c.family);
  take(j, "monte_carlo", c.monte_carlo);
  take(j, "level", c.level);
  take(j, "seed", c.seed);
  take(j, "mode", c.mode);
  take(j, "sidedness", c.sidedness);
  take(j, "summary", c.summary);
  take(j, "refit_null", c.refit_null);
  take(j, "threads", c.threads);
  take(j, "output", c.output);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::vector<std::size_t> StudyRegion::series_lengths() const {
  std::vector<std::size_t> m;
  for (const auto& s : series) m.push_back(s.times.size());
  return m;
}

StudyRegion ingest(const RunConfig& config) {
  StudyRegion region;
  const auto mode = adjustment_from_name(config.mode);
  const auto family = glm::Family::from_name(config.family);

  const auto lt = csv::read_file(config.locations);
  {
    const auto c_id = lt.column("id"), c_x = lt.column("x"), c_y = lt.column("y");
    std::set<std::string> seen;
    std::vector<std::string> dup;
    for (std::size_t r = 0; r < lt.rows.size(); ++r) {
      const auto& row = lt.rows[r];
      if (row[c_id].empty()) throw IngestionError(lt.source + ": empty id at row " + std::to_string(r + 1));
      if (!seen.insert(row[c_id]).second) dup.push_back(row[c_id]);
      region.locations.push_back(
          {row[c_id], csv::parse_double(row[c_x], lt, r, "x"), csv::parse_double(row[c_y], lt, r, "y")});
    }
    if (!dup.empty()) throw IngestionError(lt.source + ": duplicate ids: " + list_ids(dup));
  }
  const auto n = region.locations.size();
  if (n < 2) throw IngestionError(lt.source + ": need at least two locations");
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < n; ++i) index[region.locations[i].id] = static_cast<int>(i);

  const auto ct = csv::read_file(config.counts);
  {
    const auto rows = join_rows(ct, index, false);
    const auto c_cases = ct.column("cases");
    const bool has_pop = ct.has_column("population");
    if (family.kind == glm::FamilyKind::Poisson && !has_pop)
      throw IngestionError(ct.source + ": the Poisson model needs a 'population' column");
    region.cases.resize(static_cast<Eigen::Index>(n));
    if (has_pop) region.populations.resize(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < ct.rows.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(rows[r]);
      region.cases(i) = csv::parse_double(ct.rows[r][c_cases], ct, r, "cases");
      if (has_pop) region.populations(i) = csv::parse_double(ct.rows[r][ct.column("population")], ct, r, "population");
    }
  }

  region.covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0);
  if (!config.covariates.empty()) {
    const auto zt = csv::read_file(config.covariates);
    const auto rows = join_rows(zt, index, false);
    const auto c_id = zt.column("id");
    std::vector<std::size_t> cols;
    for (std::size_t k = 0; k < zt.header.size(); ++k)
      if (k != c_id) {
        cols.push_back(k);
        region.covariate_names.push_back(zt.header[k]);
      }
    region.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < zt.rows.size(); ++r)
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const double v = csv::parse_double(zt.rows[r][cols[k]], zt, r, zt.header[cols[k]]);
        if (!std::isfinite(v))
          throw IngestionError(zt.source + ": non-finite covariate at id " + zt.rows[r][c_id]);
        region.covariates(rows[r], static_cast<Eigen::Index>(k)) = v;
      }
  }

  if (!config.series.empty()) {
    const auto st = csv::read_file(config.series);
    const auto rows = join_rows(st, index, true);
    const auto c_t = st.column("t"), c_v = st.column("value");
    std::vector<std::vector<std::pair<double, double>>> obs(n);
    for (std::size_t r = 0; r < st.rows.size(); ++r)
      obs[static_cast<std::size_t>(rows[r])].emplace_back(csv::parse_double(st.rows[r][c_t], st, r, "t"),
                                                        csv::parse_double(st.rows[r][c_v], st, r, "value"));
    for (std::size_t i = 0; i < n; ++i) {
      std::stable_sort(obs[i].begin(), obs[i].end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      fda::LongitudinalSeries s;
      s.id = region.locations[i].id;
      for (const auto& [t, v] : obs[i]) {
        s.times.push_back(t);
        s.values.push_back(v);
      }
      region.series.push_back(std::move(s));
    }
  } else if (needs_series(mode)) {
    throw ConfigError("adjustment mode '" + config.mode + "' needs a 'series' file");
  }

  if (mode == AdjustmentMode::Functional) check_series_lengths(region, config.basis_dimension());
  return region;
}

PipelineResult run_analysis(const RunConfig& config, StudyRegion region, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json manifest = manifest_base(config);
  try {
    config.validate();
    const auto options = config.analysis_options();
    if (options.mode == AdjustmentMode::Functional) check_series_lengths(region, config.basis_dimension());
    if (needs_series(options.mode) && region.series.empty())
      throw ConfigError("adjustment mode '" + config.mode + "' needs longitudinal series");

    PipelineResult r;
    const auto cap = config.window_cap == "population" ? geo::WindowCap::Population : geo::WindowCap::Locations;
    std::vector<double> pops(region.populations.data(), region.populations.data() + region.populations.size());
    r.windows = geo::enumerate_windows(geo::distance_matrix(region.locations), config.max_fraction, cap, pops);
    r.analysis = analyze(region.cases, region.populations, region.covariates, region.covariate_names, region.series,
                         r.windows, options);
    r.region = std::move(region);
    r.files = write_outputs(config, r, dir);
    manifest["status"] = "ok";
    manifest["result"] = analysis_manifest(r);
    r.files.push_back("manifest.json");
    manifest["files"] = r.files;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return r;
  } catch (const Error& e) {
    manifest["status"] = "error";
    manifest["error"] = {{"kind", e.kind()}, {"message", e.what()}};
    manifest["files"] = {"error.json", "manifest.json"};
    write_error_json(dir / "error.json", e.kind(), e.what());
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
}

PipelineResult run_pipeline(const RunConfig& config) {
  const std::filesystem::path dir = config.output;
  std::filesystem::create_directories(dir);
  StudyRegion region;
  try {
    config.validate();
    region = ingest(config);
  } catch (const Error& e) {
    Json manifest = manifest_base(config);
    manifest["status"] = "error";
    manifest["error"] = {{"kind", e.kind()}, {"message", e.what()}};
    manifest["files"] = {"error.json", "manifest.json"};
    write_error_json(dir / "error.json", e.kind(), e.what());
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }
  return run_analysis(config, std::move(region), dir);
}

bool Comparison::all_ok() const {
  return std::all_of(modes.begin(), modes.end(), [](const ModeOutcome& m) { return m.ok; });
}

Comparison compare_models(const RunConfig& config) {
  const std::filesystem::path dir = config.output;
  std::filesystem::create_directories(dir);
  RunConfig base = config;
  base.mode = "none";
  Json manifest = manifest_base(config);
  StudyRegion region;
  try {
    config.validate();
    if (config.series.empty()) throw ConfigError("compare needs a 'series' file");
    region = ingest(base);
  } catch (const Error& e) {
    manifest["status"] = "error";
    manifest["error"] = {{"kind", e.kind()}, {"message", e.what()}};
    write_error_json(dir / "error.json", e.kind(), e.what());
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    throw;
  }

  Comparison cmp;
  Json modes = Json::array();
  for (const char* mode : {"none", "univariate", "multivariate", "functional"}) {
    RunConfig c = config;
    c.mode = mode;
    c.output = (dir / mode).string();
    ModeOutcome out;
    out.mode = mode;
    try {
      const auto r = run_analysis(c, region, dir / mode);
      out.ok = true;
      out.clusters = r.analysis.clusters;
      for (int k : r.windows.windows[r.analysis.scan.mlc].members)
        out.mlc_member_ids.push_back(region.locations[static_cast<std::size_t>(k)].id);
      out.mlc_llr = r.analysis.scan.lambda;
      out.mlc_p_value = r.analysis.mlc_p_value;
    } catch (const Error& e) {
      out.error = std::string(e.kind()) + ": " + e.what();
    }
    modes.push_back({{"mode", mode}, {"status", out.ok ? "ok" : "error"}, {"error", out.error},
                     {"reported_clusters", out.clusters.size()}});
    cmp.modes.push_back(std::move(out));
  }

  std::ostringstream table;
  csv::Writer w(table);
  w.row({"model", "cluster_rank", "center_id", "n_members", "member_ids", "relative_risk", "llr", "p_value"});
  for (const auto& m : cmp.modes)
    for (const auto& c : m.clusters)
      w.row({m.mode, std::to_string(c.rank), region.locations[static_cast<std::size_t>(c.center)].id,
             std::to_string(c.members.size()), join_ids(c.members, region.locations),
             csv::format_double(c.relative_risk), csv::format_double(c.llr), csv::format_double(c.p_value)});
  write_text(dir / "comparison.csv", table.str());
  manifest["status"] = cmp.all_ok() ? "ok" : "partial";
  manifest["modes"] = modes;
  manifest["files"] = {"comparison.csv", "manifest.json"};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return cmp;
}

std::vector<std::vector<std::string>> read_cluster_csv(const std::filesystem::path& path) {
  const auto t = csv::read_file(path);
  const auto c = t.column("member_ids");
  std::vector<std::vector<std::string>> out;
  for (const auto& row : t.rows) {
    std::vector<std::string> ids;
    std::string cur;
    for (char ch : row[c]) {
      if (ch == ';') {
        ids.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty() || !ids.empty()) ids.push_back(cur);
    out.push_back(std::move(ids));
  }
  return out;
}

void write_windows_csv(const geo::WindowSet& windows, std::span<const geo::Location> locations,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  csv::Writer w(out);
  w.row({"window", "center_id", "radius", "n_members", "member_ids"});
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const auto& win = windows.windows[k];
    w.row({std::to_string(k), locations[static_cast<std::size_t>(win.center)].id, csv::format_double(win.radius),
           std::to_string(win.members.size()), join_ids(win.members, locations)});
  }
  write_text(path, out.str());
}

void write_error_json(const std::filesystem::path& path, const std::string& kind, const std::string& message) {
  Json j;
  j["status"] = "error";
  j["kind"] = kind;
  j["message"] = message;
  write_text(path, j.dump(2) + "\n");
}

}  // namespace fmasss
