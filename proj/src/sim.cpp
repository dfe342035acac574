#include "fmasss/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "fmasss/csv.hpp"
#include "fmasss/error.hpp"
#include "fmasss/geo.hpp"
#include "fmasss/parallel.hpp"
#include "fmasss/quadrature.hpp"

namespace fmasss::sim {

double tent(double t) { return std::max(6.0 - std::abs(t - 11.0), 0.0); }

double theta_shape(double t) { return (t / 9.0) * std::sin(std::numbers::pi * t / 9.0 + std::numbers::pi); }

std::vector<int> nearest_cluster(const Geometry& geometry, const std::string& center_id, int size) {
  const int c = geometry.index_of(center_id);
  if (size < 1 || static_cast<std::size_t>(size) > geometry.size())
    throw ConfigError("cluster size " + std::to_string(size) + " is out of range");
  std::vector<int> order(geometry.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const auto& L = geometry.locations;
  auto d = [&](int j) { return std::hypot(L[j].x - L[c].x, L[j].y - L[c].y); };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return d(a) < d(b); });
  order.resize(static_cast<std::size_t>(size));
  std::sort(order.begin(), order.end());
  return order;
}

void SimulationConfig::finalize() {
  if (true_cluster.empty()) true_cluster = nearest_cluster(geometry, "86", 8);
  if (fake_cluster.empty()) fake_cluster = nearest_cluster(geometry, "54", 8);
  const auto n = static_cast<int>(geometry.size());
  if (n < 2) throw ConfigError("simulation geometry needs at least two locations");
  if (geometry.populations.size() != geometry.size())
    throw ConfigError("simulation geometry needs one population per location");
  for (auto* cluster : {&true_cluster, &fake_cluster}) {
    std::sort(cluster->begin(), cluster->end());
    cluster->erase(std::unique(cluster->begin(), cluster->end()), cluster->end());
    for (int i : *cluster)
      if (i < 0 || i >= n) throw ConfigError("cluster member index " + std::to_string(i) + " is out of range");
  }
  std::vector<int> common;
  std::set_intersection(true_cluster.begin(), true_cluster.end(), fake_cluster.begin(), fake_cluster.end(),
                        std::back_inserter(common));
  if (!common.empty()) throw ConfigError("true and fake clusters must be disjoint");
  if (relative_risks.empty()) throw ConfigError("relative risk grid is empty");
  for (double rr : relative_risks)
    if (!(rr > 0.0) || !std::isfinite(rr)) throw ConfigError("relative risks must be positive and finite");
  if (modes.empty()) throw ConfigError("no adjustment modes requested");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (monte_carlo < 1) throw ConfigError("monte_carlo must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (time_points < 2) throw ConfigError("time_points must be >= 2");
  if (!(t_upper > t_lower)) throw ConfigError("time interval is empty");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
  if (covariate_effect && !theta_scale && !(fake_ratio >= 1.0)) throw ConfigError("fake_ratio must be >= 1");
}

CurveIntegrals curve_integrals(double lower, double upper) {
  std::set<double> cuts{lower, upper};
  for (double k : {1.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0, 21.0})
    if (k > lower && k < upper) cuts.insert(k);
  const int pieces = 84;
  for (int j = 1; j < pieces; ++j) cuts.insert(lower + (upper - lower) * j / pieces);
  std::vector<double> breaks(cuts.begin(), cuts.end());
  const auto rule = composite_gauss_legendre(10, breaks);
  CurveIntegrals r;
  r.tent = rule.integrate([](double t) { return tent(t) * theta_shape(t); });
  r.outside = rule.integrate([](double t) { return tent(t + 4.0) * theta_shape(t); });
  r.inside = rule.integrate([](double t) { return tent(t - 4.0) * theta_shape(t); });
  return r;
}

namespace {

// E over U ~ Uniform(0,1) of exp(kappa (U a + (1 - U) b)).
double mixture_mean(double kappa, double a, double b) {
  const double x = kappa * (a - b);
  if (std::abs(x) < 1e-12) return std::exp(kappa * b) * (1.0 + 0.5 * x);
  return std::exp(kappa * b) * std::expm1(x) / x;
}

}  // namespace

double fake_cluster_ratio(double kappa, const CurveIntegrals& c) {
  return mixture_mean(kappa, c.tent, c.inside) / mixture_mean(kappa, c.tent, c.outside);
}

double calibrate_theta_scale(double ratio, const CurveIntegrals& c) {
  if (!(ratio >= 1.0)) throw ConfigError("fake_ratio must be >= 1");
  if (ratio == 1.0) return 0.0;
  const double sign = c.inside >= c.outside ? 1.0 : -1.0;
  double lo = 0.0;
  double hi = 1e-3;
  for (int i = 0; fake_cluster_ratio(sign * hi, c) < ratio; ++i) {
    if (i > 200) throw ConfigError("cannot reach the requested fake-cluster ratio");
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (fake_cluster_ratio(sign * mid, c) < ratio ? lo : hi) = mid;
  }
  return sign * 0.5 * (lo + hi);
}

double effective_theta_scale(const SimulationConfig& config) {
  if (!config.covariate_effect) return 0.0;
  if (config.theta_scale) return *config.theta_scale;
  return calibrate_theta_scale(config.fake_ratio, curve_integrals(config.t_lower, config.t_upper));
}

Dataset generate_dataset(const SimulationConfig& config, double exp_delta, Rng& rng) {
  const auto n = config.geometry.size();
  const double kappa = effective_theta_scale(config);
  const auto ints = curve_integrals(config.t_lower, config.t_upper);
  const double delta = std::log(exp_delta);
  std::vector<char> in_true(n, 0), in_fake(n, 0);
  for (int i : config.true_cluster) in_true[static_cast<std::size_t>(i)] = 1;
  for (int i : config.fake_cluster) in_fake[static_cast<std::size_t>(i)] = 1;

  std::vector<double> grid(static_cast<std::size_t>(config.time_points));
  for (int k = 0; k < config.time_points; ++k)
    grid[k] = config.t_lower + (config.t_upper - config.t_lower) * k / (config.time_points - 1);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset d;
  d.populations.resize(static_cast<Eigen::Index>(n));
  d.mu.resize(static_cast<Eigen::Index>(n));
  d.y.resize(static_cast<Eigen::Index>(n));
  d.covariate_integral.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform(rng);
    const double shift = in_fake[i] ? -4.0 : 4.0;
    fda::LongitudinalSeries s;
    s.id = config.geometry.locations[i].id;
    s.times = grid;
    s.values.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
      s.values[k] = u * tent(grid[k]) + (1.0 - u) * tent(grid[k] + shift) + config.noise_sd * noise(rng);
    const double other = in_fake[i] ? ints.inside : ints.outside;
    const auto ii = static_cast<Eigen::Index>(i);
    d.covariate_integral(ii) = kappa * (u * ints.tent + (1.0 - u) * other);
    d.populations(ii) = config.geometry.populations[i];
    d.mu(ii) = d.populations(ii) * std::exp(config.alpha + (in_true[i] ? delta : 0.0) + d.covariate_integral(ii));
    d.u.push_back(u);
    d.series.push_back(std::move(s));
  }
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    std::poisson_distribution<long long> draw(d.mu(i));
    d.y(i) = static_cast<double>(draw(rng));
  }
  return d;
}

void write_fixture(const Dataset& data, const Geometry& geometry, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InputError("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  {
    auto out = open("locations.csv");
    csv::Writer w(out);
    w.row({"id", "x", "y"});
    for (const auto& l : geometry.locations) w.row({l.id, csv::format_double(l.x), csv::format_double(l.y)});
  }
  {
    auto out = open("counts.csv");
    csv::Writer w(out);
    w.row({"id", "cases", "population"});
    for (std::size_t i = 0; i < geometry.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      w.row({geometry.locations[i].id, csv::format_double(data.y(ii)), csv::format_double(data.populations(ii))});
    }
  }
  {
    auto out = open("series.csv");
    csv::Writer w(out);
    w.row({"id", "t", "value"});
    for (const auto& s : data.series)
      for (std::size_t k = 0; k < s.times.size(); ++k)
        w.row({s.id, csv::format_double(s.times[k]), csv::format_double(s.values[k])});
  }
}

OverlapRates overlap(const std::vector<int>& mlc, const std::vector<int>& target, std::size_t n) {
  std::vector<int> a = mlc, b = target;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  OverlapRates r;
  r.intersects = !common.empty();
  if (!b.empty()) r.tp = static_cast<double>(common.size()) / static_cast<double>(b.size());
  const std::size_t outside = n - b.size();
  if (outside > 0) r.fp = static_cast<double>(a.size() - common.size()) / static_cast<double>(outside);
  return r;
}

const SimMetrics& StudyResult::find(const std::string& mode, double exp_delta, const std::string& target) const {
  for (const auto& m : metrics)
    if (m.mode == mode && m.target == target && std::abs(m.exp_delta - exp_delta) < 1e-12) return m;
  throw std::out_of_range("no metrics for mode " + mode + ", exp_delta " + csv::format_double(exp_delta) +
                          ", target " + target);
}

StudyResult run_study(SimulationConfig config, const Progress& progress) {
  config.finalize();
  const auto n = config.geometry.size();
  StudyResult result;
  result.theta_scale = effective_theta_scale(config);
  config.theta_scale = result.theta_scale;

  const auto windows = geo::enumerate_windows(geo::distance_matrix(config.geometry.locations), config.max_fraction);

  AnalysisOptions base;
  base.family = glm::Family::poisson();
  base.inertia_cap = config.inertia_cap;
  base.basis.kind = "bspline";
  base.basis.degree = config.degree;
  base.basis.knot_count = config.knot_count;
  base.basis.lower = config.t_lower;
  base.basis.upper = config.t_upper;
  base.level = config.level;
  base.monte_carlo.replicates = config.monte_carlo;
  base.monte_carlo.refit_null = config.refit_null;
  base.monte_carlo.threads = 1;
  base.monte_carlo.scan.threads = 1;

  const auto R = static_cast<std::size_t>(config.replicates);
  const auto M = config.modes.size();
  const Eigen::MatrixXd no_scalar(static_cast<Eigen::Index>(n), 0);

  for (std::size_t a = 0; a < config.relative_risks.size(); ++a) {
    const double rr = config.relative_risks[a];
    std::vector<ReplicateRecord> block(R * M);
    parallel_for(
        R,
        [&](std::size_t r) {
          auto rng = derive_stream(config.seed, {0, a, r});
          const auto data = generate_dataset(config, rr, rng);
          for (std::size_t m = 0; m < M; ++m) {
            auto& rec = block[r * M + m];
            rec.mode = adjustment_name(config.modes[m]);
            rec.exp_delta = rr;
            rec.replicate = static_cast<int>(r);
            AnalysisOptions opts = base;
            opts.mode = config.modes[m];
            opts.monte_carlo.seed = derive_stream(config.seed, {1, a, r, m})();
            try {
              const auto res = analyze(data.y, data.populations, no_scalar, {}, data.series, windows, opts);
              rec.J = res.null_fit.J;
              rec.lambda = res.scan.lambda;
              rec.p_value = res.mlc_p_value;
              rec.significant = res.mlc_p_value <= config.level;
              rec.mlc = windows.windows[res.scan.mlc].members;
              rec.true_rates = overlap(rec.mlc, config.true_cluster, n);
              rec.fake_rates = overlap(rec.mlc, config.fake_cluster, n);
            } catch (const std::exception& e) {
              rec.ok = false;
              rec.error = e.what();
            }
          }
        },
        config.threads);
    for (auto& rec : block) result.details.push_back(std::move(rec));
    if (progress) progress("exp_delta " + csv::format_double(rr) + " done");
  }

  for (std::size_t m = 0; m < M; ++m) {
    const auto mode = adjustment_name(config.modes[m]);
    for (double rr : config.relative_risks) {
      for (const std::string target : {"true", "fake"}) {
        SimMetrics s;
        s.mode = mode;
        s.exp_delta = rr;
        s.target = target;
        double tp_sig = 0.0, fp_sig = 0.0;
        int hits = 0;
        for (const auto& rec : result.details) {
          if (rec.mode != mode || rec.exp_delta != rr) continue;
          ++s.replicates;
          if (!rec.ok) {
            ++s.failures;
            continue;
          }
          const auto& rates = target == "true" ? rec.true_rates : rec.fake_rates;
          s.tp += rates.tp;
          s.fp += rates.fp;
          if (rec.significant) {
            ++s.significant;
            tp_sig += rates.tp;
            fp_sig += rates.fp;
            if (rates.intersects) ++hits;
          }
        }
        const double total = static_cast<double>(std::max(s.replicates, 1));
        s.power = hits / total;
        s.tp /= total;
        s.fp /= total;
        s.tp_sig_zero = tp_sig / total;
        s.fp_sig_zero = fp_sig / total;
        if (s.significant > 0) {
          s.tp_sig_only = tp_sig / s.significant;
          s.fp_sig_only = fp_sig / s.significant;
        }
        result.metrics.push_back(s);
      }
    }
  }
  return result;
}

void write_power_curves(const StudyResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  csv::Writer w(out);
  w.row({"mode", "exp_delta", "target", "power", "tp", "fp", "tp_sig_zero", "fp_sig_zero", "tp_sig_only",
         "fp_sig_only", "replicates", "significant", "failures"});
  auto f = csv::format_double;
  for (const auto& s : result.metrics)
    w.row({s.mode, f(s.exp_delta), s.target, f(s.power), f(s.tp), f(s.fp), f(s.tp_sig_zero), f(s.fp_sig_zero),
           f(s.tp_sig_only), f(s.fp_sig_only), std::to_string(s.replicates), std::to_string(s.significant),
           std::to_string(s.failures)});
}

void write_replicate_details(const StudyResult& result, const Geometry& geometry,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  csv::Writer w(out);
  w.row({"mode", "exp_delta", "replicate", "status", "error", "J", "lambda", "p_value", "significant",
         "mlc_member_ids", "tp_true", "fp_true", "tp_fake", "fp_fake"});
  auto f = csv::format_double;
  for (const auto& r : result.details) {
    std::string members;
    for (std::size_t k = 0; k < r.mlc.size(); ++k) {
      if (k) members += ';';
      members += geometry.locations[static_cast<std::size_t>(r.mlc[k])].id;
    }
    w.row({r.mode, f(r.exp_delta), std::to_string(r.replicate), r.ok ? "ok" : "failed", r.error,
           std::to_string(r.J), f(r.lambda), f(r.p_value), r.significant ? "1" : "0", members, f(r.true_rates.tp),
           f(r.true_rates.fp), f(r.fake_rates.tp), f(r.fake_rates.fp)});
  }
}

}  // namespace fmasss::sim
