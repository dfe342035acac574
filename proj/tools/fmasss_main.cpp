#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmasss/csv.hpp"
#include "fmasss/error.hpp"
#include "fmasss/geo.hpp"
#include "fmasss/pipeline.hpp"
#include "fmasss/sim.hpp"

using namespace fmasss;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string config_path;
  RunConfig values;
  std::vector<std::function<void(RunConfig&)>> apply;

  template <typename T>
  void bind(CLI::App* app, const std::string& key, T RunConfig::*member, const std::string& help) {
    auto* opt = app->add_option("--" + key + (key.find('_') != std::string::npos ? ",--" + dashed(key) : ""),
                                values.*member, help);
    apply.push_back([this, opt, member](RunConfig& c) {
      if (opt->count()) c.*member = values.*member;
    });
  }

  void bind_optional(CLI::App* app, const std::string& key, std::optional<double> RunConfig::*member,
                     const std::string& help) {
    auto holder = std::make_shared<double>(0.0);
    auto* opt = app->add_option("--" + key + ",--" + dashed(key), *holder, help);
    apply.push_back([opt, member, holder](RunConfig& c) {
      if (opt->count()) c.*member = *holder;
    });
  }

  static std::string dashed(std::string s) {
    for (auto& ch : s)
      if (ch == '_') ch = '-';
    return s;
  }

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration; flags override its keys");
    bind(app, "locations", &RunConfig::locations, "CSV with id,x,y");
    bind(app, "counts", &RunConfig::counts, "CSV with id,cases[,population]");
    bind(app, "covariates", &RunConfig::covariates, "CSV with id and scalar covariate columns");
    bind(app, "series", &RunConfig::series, "long-format CSV with id,t,value");
    bind(app, "basis", &RunConfig::basis, "bspline or fourier");
    bind(app, "degree", &RunConfig::degree, "B-spline degree");
    bind(app, "knots", &RunConfig::knots, "number of equally spaced knots, boundaries included");
    bind_optional(app, "t_min", &RunConfig::t_min, "lower end of the time domain");
    bind_optional(app, "t_max", &RunConfig::t_max, "upper end of the time domain");
    bind(app, "fourier_dimension", &RunConfig::fourier_dimension, "Fourier basis size");
    bind(app, "inertia_cap", &RunConfig::inertia_cap, "cumulative inertia cap for truncation");
    bind(app, "max_fraction", &RunConfig::max_fraction, "largest window as a fraction of the region");
    bind(app, "window_cap", &RunConfig::window_cap, "locations or population");
    bind(app, "family", &RunConfig::family, "poisson, bernoulli or gaussian");
    bind(app, "monte_carlo", &RunConfig::monte_carlo, "Monte Carlo replicates");
    bind(app, "level", &RunConfig::level, "significance level");
    bind(app, "seed", &RunConfig::seed, "random seed");
    bind(app, "mode", &RunConfig::mode, "none, univariate, multivariate or functional");
    bind(app, "sidedness", &RunConfig::sidedness, "two-sided, high or low");
    bind(app, "summary", &RunConfig::summary, "univariate summary: mean or median");
    bind(app, "refit_null", &RunConfig::refit_null, "refit the null model on every replicate (true/false)");
    bind(app, "threads", &RunConfig::threads, "worker threads (0 = all cores)");
    bind(app, "output", &RunConfig::output, "output directory");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& f : apply) f(c);
    return c;
  }
};

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << "fmasss: " << kind << ": " << message << "\n";
}

void print_clusters(const std::vector<scan::ClusterReport>& clusters, const std::vector<geo::Location>& locations) {
  for (const auto& c : clusters)
    std::printf("  cluster %d: center %s, %zu members, RR %.4g, LLR %.4f, p %.4g\n", c.rank,
                locations[static_cast<std::size_t>(c.center)].id.c_str(), c.members.size(), c.relative_risk, c.llr,
                c.p_value);
}

int run_scan(const ConfigFlags& flags) {
  RunConfig config;
  try {
    config = flags.resolve();
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  }
  try {
    const auto r = run_pipeline(config);
    std::printf("mode %s: %zu locations, %zu windows, J=%d, lambda %.6f, p %.4g\n", config.mode.c_str(),
                r.region.size(), r.windows.size(), r.analysis.null_fit.J, r.analysis.scan.lambda,
                r.analysis.mlc_p_value);
    print_clusters(r.analysis.clusters, r.region.locations);
    std::printf("outputs in %s\n", config.output.c_str());
    return 0;
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  }
}

int run_compare(const ConfigFlags& flags) {
  try {
    const auto config = flags.resolve();
    const auto cmp = compare_models(config);
    for (const auto& m : cmp.modes) {
      if (!m.ok) {
        std::printf("%-12s failed: %s\n", m.mode.c_str(), m.error.c_str());
        continue;
      }
      std::printf("%-12s MLC LLR %.4f, p %.4g, %zu reported clusters\n", m.mode.c_str(), m.mlc_llr, m.mlc_p_value,
                  m.clusters.size());
    }
    std::printf("comparison table in %s\n", (fs::path(config.output) / "comparison.csv").string().c_str());
    return cmp.all_ok() ? 0 : 2;
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  }
}

struct SimFlags {
  sim::SimulationConfig config;
  std::vector<std::string> modes{"univariate", "multivariate", "functional"};
  double theta_scale = 0.0;
  CLI::Option* theta_scale_opt = nullptr;
  bool no_covariate_effect = false;
  bool full_scale = false;
  bool frozen_offsets = false;
  std::string output = "fmasss-sim";
  std::string fixture;
  double fixture_exp_delta = 2.0;
  int fixture_time_points = 64;
};

int run_simulate(SimFlags& f) {
  const fs::path dir = f.output;
  try {
    auto& c = f.config;
    c.modes.clear();
    for (const auto& m : f.modes) c.modes.push_back(adjustment_from_name(m));
    if (f.theta_scale_opt->count()) c.theta_scale = f.theta_scale;
    c.covariate_effect = !f.no_covariate_effect;
    c.refit_null = !f.frozen_offsets;
    if (f.full_scale) {
      c.replicates = 1000;
      c.monte_carlo = 999;
    }
    if (!f.fixture.empty()) {
      c.time_points = f.fixture_time_points;
      c.finalize();
      auto rng = derive_stream(c.seed, {2});
      const auto data = sim::generate_dataset(c, f.fixture_exp_delta, rng);
      sim::write_fixture(data, c.geometry, f.fixture);
      std::printf("fixture with %zu locations and %d time points written to %s\n", c.geometry.size(),
                  c.time_points, f.fixture.c_str());
      return 0;
    }
    fs::create_directories(dir);
    const auto result = sim::run_study(c, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
    sim::write_power_curves(result, dir / "power_curves.csv");
    sim::write_replicate_details(result, c.geometry, dir / "replicate_details.csv");

    nlohmann::ordered_json m;
    m["tool"] = "fmasss";
    m["version"] = kVersion;
    m["command"] = "simulate";
    m["seed"] = c.seed;
    m["replicates"] = c.replicates;
    m["monte_carlo"] = c.monte_carlo;
    m["level"] = c.level;
    m["relative_risks"] = c.relative_risks;
    m["modes"] = f.modes;
    m["time_points"] = c.time_points;
    m["noise_sd"] = c.noise_sd;
    m["alpha"] = c.alpha;
    m["covariate_effect"] = c.covariate_effect;
    m["theta_scale"] = result.theta_scale;
    m["knots"] = c.knot_count;
    m["degree"] = c.degree;
    m["inertia_cap"] = c.inertia_cap;
    m["max_fraction"] = c.max_fraction;
    m["refit_null"] = c.refit_null;
    auto ids = [&](const std::vector<int>& v) {
      std::vector<std::string> out;
      for (int i : v) out.push_back(c.geometry.locations[static_cast<std::size_t>(i)].id);
      return out;
    };
    sim::SimulationConfig fin = c;
    fin.finalize();
    m["true_cluster"] = ids(fin.true_cluster);
    m["fake_cluster"] = ids(fin.fake_cluster);
    m["files"] = {"power_curves.csv", "replicate_details.csv", "manifest.json"};
    std::ofstream(dir / "manifest.json", std::ios::binary) << m.dump(2) << "\n";

    for (const auto& s : result.metrics)
      std::printf("%-12s exp_delta %.2f %-4s power %.3f tp %.3f fp %.3f\n", s.mode.c_str(), s.exp_delta,
                  s.target.c_str(), s.power, s.tp, s.fp);
    return 0;
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) write_error_json(dir / "error.json", e.kind(), e.what());
    return 1;
  }
}

struct WindowFlags {
  std::string locations;
  std::string counts;
  double max_fraction = 0.5;
  std::string window_cap = "locations";
  std::string output = "windows.csv";
};

int run_windows(const WindowFlags& f) {
  try {
    RunConfig c;
    c.locations = f.locations;
    c.counts = f.counts;
    c.family = "poisson";
    c.mode = "none";
    std::vector<geo::Location> locations;
    std::vector<double> pops;
    if (f.window_cap == "population") {
      if (f.counts.empty()) throw ConfigError("--window_cap population needs --counts");
      auto region = ingest(c);
      locations = region.locations;
      pops.assign(region.populations.data(), region.populations.data() + region.populations.size());
    } else if (f.window_cap == "locations") {
      const auto t = csv::read_file(f.locations);
      const auto ci = t.column("id"), cx = t.column("x"), cy = t.column("y");
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        locations.push_back({t.rows[r][ci], csv::parse_double(t.rows[r][cx], t, r, "x"),
                             csv::parse_double(t.rows[r][cy], t, r, "y")});
    } else {
      throw ConfigError("window_cap must be 'locations' or 'population'");
    }
    const auto cap = f.window_cap == "population" ? geo::WindowCap::Population : geo::WindowCap::Locations;
    const auto ws = geo::enumerate_windows(geo::distance_matrix(locations), f.max_fraction, cap, pops);
    write_windows_csv(ws, locations, f.output);
    std::printf("%zu windows (%zu before duplicate removal) written to %s\n", ws.size(), ws.generated_before_dedup,
                f.output.c_str());
    return 0;
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional-model-adjusted spatial scan statistic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  ConfigFlags scan_flags, compare_flags;
  auto* scan_cmd = app.add_subcommand("scan", "run the adjusted scan for one adjustment mode");
  scan_flags.add_to(scan_cmd);
  auto* compare_cmd = app.add_subcommand("compare", "run all four adjustment modes side by side");
  compare_flags.add_to(compare_cmd);

  SimFlags sf;
  auto* sim_cmd = app.add_subcommand("simulate", "power study with true and fake clusters");
  sim_cmd->add_option("--output", sf.output, "output directory");
  sim_cmd->add_option("--replicates", sf.config.replicates, "datasets per relative risk");
  sim_cmd->add_option("--monte_carlo,--monte-carlo", sf.config.monte_carlo, "Monte Carlo replicates per test");
  sim_cmd->add_option("--relative_risks,--relative-risks", sf.config.relative_risks, "relative risk grid")->delimiter(',');
  sim_cmd->add_option("--modes", sf.modes, "adjustment modes")->delimiter(',');
  sim_cmd->add_option("--level", sf.config.level, "significance level");
  sim_cmd->add_option("--seed", sf.config.seed, "random seed");
  sim_cmd->add_option("--time_points,--time-points", sf.config.time_points, "observation times per curve");
  sim_cmd->add_option("--noise_sd,--noise-sd", sf.config.noise_sd, "standard deviation of the curve noise");
  sim_cmd->add_option("--alpha", sf.config.alpha, "intercept");
  sf.theta_scale_opt = sim_cmd->add_option("--theta_scale,--theta-scale", sf.theta_scale,
                                           "multiplier on theta (default: calibrated to --fake_ratio)");
  sim_cmd->add_option("--fake_ratio,--fake-ratio", sf.config.fake_ratio, "target incidence ratio of the fake cluster");
  sim_cmd->add_flag("--no_covariate_effect,--no-covariate-effect", sf.no_covariate_effect, "set theta to zero");
  sim_cmd->add_option("--knots", sf.config.knot_count, "B-spline knots");
  sim_cmd->add_option("--degree", sf.config.degree, "B-spline degree");
  sim_cmd->add_option("--inertia_cap,--inertia-cap", sf.config.inertia_cap, "cumulative inertia cap");
  sim_cmd->add_option("--max_fraction,--max-fraction", sf.config.max_fraction, "largest window fraction");
  sim_cmd->add_flag("--frozen_offsets,--frozen-offsets", sf.frozen_offsets,
                    "keep covariate offsets fixed in Monte Carlo replicates");
  sim_cmd->add_flag("--full_scale,--full-scale", sf.full_scale, "1000 replicates and 999 Monte Carlo draws");
  sim_cmd->add_option("--threads", sf.config.threads, "worker threads (0 = all cores)");
  sim_cmd->add_option("--fixture", sf.fixture, "write one dataset as CLI input files into this directory and exit");
  sim_cmd->add_option("--fixture_exp_delta,--fixture-exp-delta", sf.fixture_exp_delta, "relative risk of the fixture");
  sim_cmd->add_option("--fixture_time_points,--fixture-time-points", sf.fixture_time_points,
                      "observation times per curve in the fixture");

  WindowFlags wf;
  auto* win_cmd = app.add_subcommand("windows", "list the enumerated circular windows");
  win_cmd->add_option("--locations", wf.locations, "CSV with id,x,y")->required();
  win_cmd->add_option("--counts", wf.counts, "CSV with id,cases,population (population cap only)");
  win_cmd->add_option("--max_fraction,--max-fraction", wf.max_fraction, "largest window fraction");
  win_cmd->add_option("--window_cap,--window-cap", wf.window_cap, "locations or population");
  win_cmd->add_option("--output", wf.output, "output CSV");

  CLI11_PARSE(app, argc, argv);

  if (scan_cmd->parsed()) return run_scan(scan_flags);
  if (compare_cmd->parsed()) return run_compare(compare_flags);
  if (sim_cmd->parsed()) return run_simulate(sf);
  if (win_cmd->parsed()) return run_windows(wf);
  return 1;
}
