#include "fmasss/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fmasss/error.hpp"

namespace fmasss::geo {

namespace {

struct VectorHash {
  std::size_t operator()(const std::vector<int>& v) const noexcept {
    std::size_t h = v.size();
    for (int x : v) h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }
};

// Two distances count as tied when they agree to within rounding noise.
bool tied(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

Eigen::MatrixXd distance_matrix(std::span<const Location> locations) {
  const auto n = static_cast<Eigen::Index>(locations.size());
  if (n < 2) throw InputError("distance_matrix needs at least 2 locations, got " + std::to_string(n));
  for (const auto& loc : locations) {
    if (!std::isfinite(loc.x) || !std::isfinite(loc.y))
      throw InputError("location '" + loc.id + "' has a non-finite coordinate");
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = std::hypot(locations[i].x - locations[j].x, locations[i].y - locations[j].y);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

WindowSet enumerate_windows(const Eigen::MatrixXd& distances, double max_fraction, WindowCap cap,
                            std::span<const double> populations) {
  if (!(max_fraction > 0.0 && max_fraction <= 0.5))
    throw ConfigError("max_fraction must lie in (0, 0.5], got " + std::to_string(max_fraction));
  const auto n = static_cast<std::size_t>(distances.rows());
  if (n < 1 || distances.cols() != distances.rows())
    throw InputError("distance matrix must be square and non-empty");
  if (!distances.allFinite()) throw InputError("distance matrix has non-finite entries");

  double pop_limit = 0.0;
  if (cap == WindowCap::Population) {
    if (populations.size() != n)
      throw ConfigError("population cap needs one population per location");
    double total = 0.0;
    for (double p : populations) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("populations must be finite and >= 0");
      total += p;
    }
    pop_limit = max_fraction * total;
  }
  const auto size_limit = static_cast<std::size_t>(std::floor(max_fraction * static_cast<double>(n)));

  WindowSet out;
  out.location_count = n;
  out.neighbor_order.resize(n);
  std::unordered_set<std::vector<int>, VectorHash> seen;

  for (std::size_t c = 0; c < n; ++c) {
    auto& order = out.neighbor_order[c];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    // The center comes first even if another location sits at distance 0.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (a == b) return false;
      double da = distances(c, a), db = distances(c, b);
      if (da != db) return da < db;
      if (a == static_cast<int>(c) || b == static_cast<int>(c)) return a == static_cast<int>(c);
      return a < b;
    });

    std::size_t taken = 0;
    double pop = 0.0;
    while (taken < n) {
      // Extend by one whole tie group.
      std::size_t end = taken + 1;
      double radius = distances(c, order[taken]);
      while (end < n && tied(distances(c, order[end]), radius)) {
        radius = std::max(radius, distances(c, order[end]));
        ++end;
      }
      double group_pop = 0.0;
      if (cap == WindowCap::Population)
        for (std::size_t k = taken; k < end; ++k) group_pop += populations[order[k]];

      bool fits = cap == WindowCap::Locations ? end <= size_limit : pop + group_pop <= pop_limit;
      if (!fits) break;
      pop += group_pop;
      taken = end;

      ++out.generated_before_dedup;
      std::vector<int> members(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(taken));
      std::sort(members.begin(), members.end());
      if (!seen.insert(members).second) continue;
      out.windows.push_back({std::move(members), static_cast<int>(c), radius});
    }
  }
  return out;
}

Eigen::VectorXd window_indicator(const PotentialCluster& window, std::size_t n) {
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (int m : window.members) xi(m) = 1.0;
  return xi;
}

}  // namespace fmasss::geo
