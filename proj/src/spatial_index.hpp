#pragma once

#include <cstddef>
#include <vector>

#include "geo.hpp"

namespace enda {

// Latitude-band index over a fixed point set for horizontal
// neighborhood queries. Candidates are pre-filtered with conservative
// latitude/longitude bounds, then confirmed with the exact
// great-circle distance, so results are exact.
class ObsSpatialIndex {
 public:
  struct Neighbor {
    std::size_t idx;
    double d_km;
  };

  ObsSpatialIndex(std::vector<GeoPoint> points, double cutoff_km);

  // All indexed points with great-circle distance < cutoff of p,
  // ascending by point index.
  std::vector<Neighbor> query(const GeoPoint& p) const;

  std::size_t size() const { return n_points_; }

 private:
  struct Entry {
    double lon;
    double lat;
    std::size_t idx;
  };

  double cutoff_km_;
  double band_height_deg_;
  std::size_t n_bands_;
  std::size_t n_points_;
  std::vector<std::vector<Entry>> bands_;  // each sorted by lon
};

}  // namespace enda
