#pragma once

#include <string>
#include <vector>

#include "fmasss/geo.hpp"

namespace fmasss::sim {

/// Locations and at-risk populations used as simulation geometry.
struct Geometry {
  std::vector<geo::Location> locations;
  std::vector<std::string> names;
  std::vector<double> populations;

  std::size_t size() const { return locations.size(); }
  /// Index of the location with the given id; throws InputError if absent.
  int index_of(const std::string& id) const;
};

/// The 94 continental French départements: prefecture coordinates projected
/// to kilometres (equirectangular about 46.5N, 2.5E) and census
/// populations of the late 2010s.
Geometry france94();

}  // namespace fmasss::sim
