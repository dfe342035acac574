#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fmasss::geo {

/// A spatial unit on a planar (projected) map.
struct Location {
  std::string id;
  double x = 0.0;
  double y = 0.0;
};

/// A circular potential cluster: every location within `radius` of `center`.
/// `members` is sorted ascending and always contains `center`.
struct PotentialCluster {
  std::vector<int> members;
  int center = 0;
  double radius = 0.0;
};

/// What the window size cap is measured against.
enum class WindowCap {
  Locations,   ///< at most floor(max_fraction * n) locations
  Population,  ///< at most max_fraction of the total at-risk population
};

/// The enumerated collection of windows, plus each center's neighbor
/// ordering. Every window of a given center is a prefix of that center's
/// ordering, which lets the scan accumulate inside sums incrementally.
struct WindowSet {
  std::vector<PotentialCluster> windows;
  /// neighbor_order[c] lists all locations by (distance from c, index).
  std::vector<std::vector<int>> neighbor_order;
  std::size_t location_count = 0;
  /// Number of candidate windows generated before duplicate removal.
  std::size_t generated_before_dedup = 0;

  std::size_t size() const { return windows.size(); }
};

Eigen::MatrixXd distance_matrix(std::span<const Location> locations);

/// Variable-radius circular windows grown from every center by nearest
/// neighbour inclusion. Equidistant neighbours enter together. Windows are
/// ordered by center index, then size; repeated member sets keep only their
/// first occurrence.
///
/// `populations` is required when `cap == WindowCap::Population`.
WindowSet enumerate_windows(const Eigen::MatrixXd& distances, double max_fraction,
                            WindowCap cap = WindowCap::Locations,
                            std::span<const double> populations = {});

/// Indicator vector (0/1) of a window over n locations.
Eigen::VectorXd window_indicator(const PotentialCluster& window, std::size_t n);

}  // namespace fmasss::geo
