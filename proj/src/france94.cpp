#include "fmasss/france94.hpp"

#include <cmath>
#include <numbers>

#include "fmasss/csv.hpp"
#include "fmasss/error.hpp"

namespace fmasss::sim {

namespace {

constexpr const char* kTable =
#include "france94_data.inc"
    ;

constexpr double kEarthRadiusKm = 6371.0;
constexpr double kLat0 = 46.5;
constexpr double kLon0 = 2.5;

}  // namespace

int Geometry::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (locations[i].id == id) return static_cast<int>(i);
  throw InputError("unknown location id '" + id + "'");
}

Geometry france94() {
  const auto table = csv::parse(kTable, "france94.csv");
  const auto c_id = table.column("id");
  const auto c_name = table.column("name");
  const auto c_lat = table.column("lat");
  const auto c_lon = table.column("lon");
  const auto c_pop = table.column("population");
  const double deg = std::numbers::pi / 180.0;
  const double coslat = std::cos(kLat0 * deg);

  Geometry g;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double lat = csv::parse_double(row[c_lat], table, r, "lat");
    const double lon = csv::parse_double(row[c_lon], table, r, "lon");
    g.locations.push_back({row[c_id], kEarthRadiusKm * (lon - kLon0) * deg * coslat,
                           kEarthRadiusKm * (lat - kLat0) * deg});
    g.names.push_back(row[c_name]);
    g.populations.push_back(csv::parse_double(row[c_pop], table, r, "population"));
  }
  return g;
}

}  // namespace fmasss::sim
