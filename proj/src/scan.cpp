#include "fmasss/scan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fmasss/error.hpp"
#include "fmasss/parallel.hpp"

namespace fmasss::scan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double xlogy_ratio(double x, double denom) { return x == 0.0 ? 0.0 : x * std::log(x / denom); }

// Orders window fits for the MLC: larger LLR, then fewer members, then lower
// center, then lower window index.
bool ranks_before(const WindowFit& a, const WindowFit& b, const geo::WindowSet& ws) {
  if (a.llr != b.llr) return a.llr > b.llr;
  const auto& wa = ws.windows[a.window];
  const auto& wb = ws.windows[b.window];
  if (wa.members.size() != wb.members.size()) return wa.members.size() < wb.members.size();
  if (wa.center != wb.center) return wa.center < wb.center;
  return a.window < b.window;
}

void apply_sidedness(WindowFit& f, Sidedness s) {
  if (s == Sidedness::High && !(f.delta > 0.0)) f.llr = 0.0;
  if (s == Sidedness::Low && !(f.delta < 0.0)) f.llr = 0.0;
}

void check_proper(const geo::PotentialCluster& window, std::size_t n) {
  if (window.members.empty()) throw InvalidWindowError("window has no members");
  if (window.members.size() >= n) throw InvalidWindowError("window covers every location");
  for (int m : window.members)
    if (m < 0 || static_cast<std::size_t>(m) >= n) throw InvalidWindowError("window member out of range");
}

WindowFit closed_form(double o_in, double n_in, double O, double N) {
  WindowFit f;
  f.inside_observed = o_in;
  f.inside_adjusted = n_in;
  const double o_out = O - o_in;
  const double n_out = N - n_in;
  f.alpha = o_out == 0.0 ? -kInf : std::log(o_out / n_out);
  if (O == 0.0) {
    f.delta = 0.0;
  } else if (o_in == 0.0) {
    f.delta = -kInf;
  } else if (o_out == 0.0) {
    f.delta = kInf;
  } else {
    f.delta = std::log((o_in / n_in) * (n_out / o_out));
  }
  f.llr = poisson_llr(o_in, n_in, O, N);
  return f;
}

// Outcome values that make one side of the window saturate the likelihood
// (its best mean sits on the boundary of the parameter space).
bool saturated(const glm::Family& family, const Eigen::VectorXd& y, const std::vector<int>& idx) {
  if (idx.empty()) return false;
  if (family.kind == glm::FamilyKind::Gaussian) return false;
  bool all_zero = std::all_of(idx.begin(), idx.end(), [&](int i) { return y(i) == 0.0; });
  if (all_zero) return true;
  if (family.kind == glm::FamilyKind::Bernoulli)
    return std::all_of(idx.begin(), idx.end(), [&](int i) { return y(i) == 1.0; });
  return false;
}

bool saturates_high(const glm::Family& family, const Eigen::VectorXd& y, const std::vector<int>& idx) {
  return family.kind == glm::FamilyKind::Bernoulli &&
         std::all_of(idx.begin(), idx.end(), [&](int i) { return y(i) == 1.0; });
}

// Intercept-only fit on a subset of locations; returns (alpha, loglik).
std::pair<double, double> intercept_fit(const Eigen::VectorXd& y, const glm::Family& family,
                                        const Eigen::VectorXd& offsets, const std::vector<int>& idx,
                                        double dispersion, bool& converged) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd ys(m), os(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    ys(k) = y(idx[k]);
    os(k) = offsets(idx[k]);
  }
  glm::GlmOptions opt;
  opt.fixed_dispersion = dispersion;
  auto fit = glm::fit_glm(ys, Eigen::MatrixXd::Ones(m, 1), family, os, opt);
  converged = fit.converged;
  return {fit.coefficients(0), fit.loglik};
}

}  // namespace

Sidedness sidedness_from_name(const std::string& name) {
  if (name == "two-sided" || name == "both") return Sidedness::TwoSided;
  if (name == "high") return Sidedness::High;
  if (name == "low") return Sidedness::Low;
  throw ConfigError("unknown sidedness '" + name + "' (expected two-sided, high or low)");
}

std::string sidedness_name(Sidedness s) {
  switch (s) {
    case Sidedness::TwoSided: return "two-sided";
    case Sidedness::High: return "high";
    case Sidedness::Low: return "low";
  }
  return "two-sided";
}

double poisson_llr(double o_in, double n_in, double O, double N) {
  const double o_out = O - o_in;
  const double n_out = N - n_in;
  double llr = xlogy_ratio(o_in, n_in) + xlogy_ratio(o_out, n_out) - xlogy_ratio(O, N);
  return llr < 0.0 ? 0.0 : llr;
}

WindowFit poisson_window_fit(const geo::PotentialCluster& window, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& adjusted, std::size_t index) {
  const auto n = static_cast<std::size_t>(y.size());
  if (adjusted.size() != y.size()) throw InputError("outcomes and adjusted populations differ in length");
  check_proper(window, n);
  for (Eigen::Index i = 0; i < adjusted.size(); ++i)
    if (!(adjusted(i) > 0.0)) throw InputError("adjusted populations must be > 0");
  double o_in = 0.0, n_in = 0.0;
  for (int m : window.members) {
    o_in += y(m);
    n_in += adjusted(m);
  }
  WindowFit f = closed_form(o_in, n_in, y.sum(), adjusted.sum());
  f.window = index;
  return f;
}

WindowFit generic_window_fit(const geo::PotentialCluster& window, const Eigen::VectorXd& y,
                             const glm::Family& family, const Eigen::VectorXd& offsets, double null_loglik,
                             double dispersion, std::optional<double> fixed_delta, std::size_t index) {
  const auto n = static_cast<std::size_t>(y.size());
  if (offsets.size() != y.size()) throw InputError("outcomes and offsets differ in length");
  check_proper(window, n);

  std::vector<char> in(n, 0);
  for (int m : window.members) in[m] = 1;
  std::vector<int> inside, outside;
  for (std::size_t i = 0; i < n; ++i) (in[i] ? inside : outside).push_back(static_cast<int>(i));

  WindowFit f;
  f.window = index;
  for (int i : inside) f.inside_observed += y(i);
  double ll = 0.0;

  if (fixed_delta) {
    Eigen::VectorXd off = offsets;
    for (int i : inside) off(i) += *fixed_delta;
    glm::GlmOptions opt;
    opt.fixed_dispersion = dispersion;
    auto fit = glm::fit_glm(y, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1), family, off, opt);
    f.alpha = fit.coefficients(0);
    f.delta = *fixed_delta;
    f.valid = fit.converged;
    ll = fit.loglik;
  } else {
    const bool sat_in = saturated(family, y, inside);
    const bool sat_out = saturated(family, y, outside);
    if (!sat_in && !sat_out) {
      Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
      X.col(0).setOnes();
      for (std::size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), 1) = in[i];
      glm::GlmOptions opt;
      opt.fixed_dispersion = dispersion;
      auto fit = glm::fit_glm(y, X, family, offsets, opt);
      f.alpha = fit.coefficients(0);
      f.delta = fit.coefficients(1);
      f.valid = fit.converged;
      ll = fit.loglik;
    } else {
      // A saturated side contributes its supremum, 0, to the log-likelihood.
      bool conv_in = true, conv_out = true;
      double a_in = 0.0, a_out = 0.0;
      if (!sat_in) std::tie(a_in, ll) = intercept_fit(y, family, offsets, inside, dispersion, conv_in);
      if (!sat_out) {
        double ll_out = 0.0;
        std::tie(a_out, ll_out) = intercept_fit(y, family, offsets, outside, dispersion, conv_out);
        ll += ll_out;
      }
      const double in_level = sat_in ? (saturates_high(family, y, inside) ? kInf : -kInf) : a_in;
      f.alpha = sat_out ? (saturates_high(family, y, outside) ? kInf : -kInf) : a_out;
      if (sat_in && sat_out) {
        f.delta = in_level == f.alpha ? 0.0 : (in_level > f.alpha ? kInf : -kInf);
      } else if (sat_in) {
        f.delta = in_level;
      } else {
        f.delta = f.alpha > 0 ? -kInf : kInf;
      }
      f.valid = conv_in && conv_out;
    }
  }
  f.llr = std::max(0.0, ll - null_loglik);
  return f;
}

ScanResult run_scan(const geo::WindowSet& ws, const Eigen::VectorXd& y, const glm::NullFit& null_fit,
                    const glm::Family& family, const ScanOptions& options) {
  const std::size_t n = ws.location_count;
  if (ws.windows.empty()) throw ScanError("no windows to scan");
  if (static_cast<std::size_t>(y.size()) != n) throw ScanError("outcome length does not match the window set");

  ScanResult res;
  res.fits.resize(ws.windows.size());

  if (family.kind == glm::FamilyKind::Poisson && options.poisson_closed_form) {
    const Eigen::VectorXd& adj = null_fit.adjusted_populations;
    if (static_cast<std::size_t>(adj.size()) != n) throw ScanError("null fit has no adjusted populations");
    const double O = y.sum();
    const double N = adj.sum();
    // Windows of one center are ordered prefixes of its neighbour list.
    std::size_t w = 0;
    while (w < ws.windows.size()) {
      const int c = ws.windows[w].center;
      const auto& order = ws.neighbor_order[c];
      std::size_t pos = 0;
      double o_in = 0.0, n_in = 0.0;
      for (; w < ws.windows.size() && ws.windows[w].center == c; ++w) {
        const auto& win = ws.windows[w];
        if (win.members.size() >= n) throw InvalidWindowError("window covers every location");
        for (; pos < win.members.size(); ++pos) {
          o_in += y(order[pos]);
          n_in += adj(order[pos]);
        }
        WindowFit f = closed_form(o_in, n_in, O, N);
        f.window = w;
        apply_sidedness(f, options.sidedness);
        res.fits[w] = f;
      }
    }
  } else {
    const Eigen::VectorXd& off = null_fit.full_offsets;
    if (static_cast<std::size_t>(off.size()) != n) throw ScanError("null fit has no offsets");
    parallel_for(
        ws.windows.size(),
        [&](std::size_t w) {
          WindowFit f;
          try {
            f = generic_window_fit(ws.windows[w], y, family, off, null_fit.loglik, null_fit.dispersion,
                                   std::nullopt, w);
          } catch (const FitError&) {
            f.window = w;
            f.valid = false;
          }
          double mu_in = 0.0;
          for (int m : ws.windows[w].members) mu_in += null_fit.fitted(m);
          f.inside_adjusted = mu_in;
          apply_sidedness(f, options.sidedness);
          res.fits[w] = f;
        },
        options.threads);
  }

  bool found = false;
  for (std::size_t w = 0; w < res.fits.size(); ++w) {
    const auto& f = res.fits[w];
    if (!f.valid || !std::isfinite(f.llr)) {
      ++res.invalid_windows;
      continue;
    }
    if (!found || ranks_before(f, res.fits[res.mlc], ws)) {
      res.mlc = w;
      found = true;
    }
  }
  if (!found) throw ScanError("every window fit failed");
  res.lambda = res.fits[res.mlc].llr;
  return res;
}

double dwass_pvalue(double lambda, std::span<const double> reps) {
  std::size_t ge = 0;
  for (double r : reps)
    if (r >= lambda) ++ge;
  return static_cast<double>(1 + ge) / static_cast<double>(reps.size() + 1);
}

Eigen::VectorXd draw_null_outcomes(const glm::Family& family, const glm::NullFit& fit, Rng& rng) {
  const auto n = fit.fitted.size();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = fit.fitted(i);
    switch (family.kind) {
      case glm::FamilyKind::Poisson: {
        std::poisson_distribution<long long> d(mu);
        y(i) = static_cast<double>(d(rng));
        break;
      }
      case glm::FamilyKind::Bernoulli: {
        std::bernoulli_distribution d(mu);
        y(i) = d(rng) ? 1.0 : 0.0;
        break;
      }
      case glm::FamilyKind::Gaussian: {
        std::normal_distribution<double> d(mu, std::sqrt(fit.dispersion));
        y(i) = d(rng);
        break;
      }
    }
  }
  return y;
}

MonteCarloResult monte_carlo_pvalues(const geo::WindowSet& windows, const glm::NullModel& model,
                                     const glm::NullFit& null_fit, const ScanResult& observed,
                                     const MonteCarloOptions& options) {
  if (options.replicates < 1) throw ConfigError("Monte Carlo replicate count must be >= 1");
  const auto M = static_cast<std::size_t>(options.replicates);

  // Frozen mode: intercept-only null with the observed covariate effects as
  // fixed offsets.
  glm::NullModel frozen;
  if (!options.refit_null) {
    frozen.family = model.family;
    frozen.scalar_covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(model.size()), 0);
    frozen.scores = Eigen::MatrixXd(static_cast<Eigen::Index>(model.size()), 0);
    frozen.J = 0;
    frozen.base_offset = null_fit.full_offsets;
    if (model.family.kind == glm::FamilyKind::Poisson) frozen.populations = null_fit.adjusted_populations;
  }
  const glm::NullModel& replicate_model = options.refit_null ? model : frozen;

  ScanOptions inner = options.scan;
  inner.threads = 1;

  MonteCarloResult res;
  res.replicate_lambdas.assign(M, 0.0);
  std::vector<char> resampled(M, 0), failed(M, 0);

  parallel_for(
      M,
      [&](std::size_t m) {
        for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
          Rng rng = derive_stream(options.seed, {static_cast<std::uint64_t>(m), attempt});
          try {
            Eigen::VectorXd ystar = draw_null_outcomes(model.family, null_fit, rng);
            auto fit = glm::fit_null(replicate_model, ystar);
            auto sc = run_scan(windows, ystar, fit, model.family, inner);
            res.replicate_lambdas[m] = sc.lambda;
            return;
          } catch (const Error&) {
            if (attempt == 0) resampled[m] = 1;
          }
        }
        failed[m] = 1;
        res.replicate_lambdas[m] = kInf;
      },
      options.threads);

  res.resampled_replicates = static_cast<int>(std::count(resampled.begin(), resampled.end(), 1));
  res.failed_replicates = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  res.p_value = dwass_pvalue(observed.lambda, res.replicate_lambdas);
  return res;
}

std::vector<ClusterReport> secondary_clusters(const geo::WindowSet& ws, const ScanResult& scan,
                                              const MonteCarloResult& mc, double threshold,
                                              const glm::NullFit* null_fit) {
  std::vector<std::size_t> order;
  order.reserve(scan.fits.size());
  for (std::size_t w = 0; w < scan.fits.size(); ++w)
    if (scan.fits[w].valid && std::isfinite(scan.fits[w].llr)) order.push_back(w);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranks_before(scan.fits[a], scan.fits[b], ws); });

  std::vector<ClusterReport> out;
  std::vector<char> used(ws.location_count, 0);
  for (std::size_t w : order) {
    const auto& f = scan.fits[w];
    const double p = dwass_pvalue(f.llr, mc.replicate_lambdas);
    // p never decreases along this order, so nothing later can qualify.
    if (p > threshold) break;
    const auto& win = ws.windows[f.window];
    if (std::any_of(win.members.begin(), win.members.end(), [&](int m) { return used[m] != 0; })) continue;
    for (int m : win.members) used[m] = 1;

    ClusterReport r;
    r.rank = static_cast<int>(out.size()) + 1;
    r.window = f.window;
    r.center = win.center;
    r.members = win.members;
    r.radius = win.radius;
    r.relative_risk = std::exp(f.delta);
    r.llr = f.llr;
    r.p_value = p;
    r.observed = f.inside_observed;
    if (null_fit != nullptr && null_fit->fitted.size() > 0)
      for (int m : win.members) r.expected += null_fit->fitted(m);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fmasss::scan
