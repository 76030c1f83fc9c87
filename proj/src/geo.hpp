#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace enda {

// Mean Earth radius of the equal-surface sphere (km).
inline constexpr double kEarthRadiusKm = 6371.0072;

// Hard cutoff multiplier shared by localization and thinning tapers.
inline constexpr double kCutoffFactor = 1.8257418583505537;  // sqrt(10/3)

struct GeoPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  std::optional<double> pressure_hpa;
};

// Normalizes a longitude into [0, 360).
double normalize_lon(double lon_deg);

// Great-circle distance on the perfect sphere, km. Wrap-correct in
// longitude and accurate to well under 1 m for near-coincident and
// antipodal pairs.
double great_circle_km(const GeoPoint& a, const GeoPoint& b);

// |ln p1 - ln p2|, both in hPa. Throws std::domain_error for
// non-positive pressures.
double log_pressure_distance(double p1_hpa, double p2_hpa);

// Cosine-latitude weights normalized so their mean is 1.
// Throws std::domain_error if all cosines vanish.
std::vector<double> latitude_weights(const std::vector<double>& lats_deg);

// Gaussian taper with a hard zero beyond sqrt(10/3) times either radius.
// Used both as the thinning distance weight and the LETKF localization
// weight (the two share the functional form).
double taper_weight(double d_h_km, double d_v_logp, double r_h_km,
                    double r_v_logp);

struct GridSpec {
  std::size_t n_lon = 0;
  std::size_t n_lat = 0;
  std::vector<double> lon_deg;     // ascending in [0, 360)
  std::vector<double> lat_deg;     // ascending in [-90, 90]
  std::vector<double> levels_hpa;  // strictly decreasing toward the top
  std::vector<double> cell_area;   // per latitude row, km^2; relative use only
  std::vector<double> lat_weight;  // per latitude row, mean 1

  // Regular lat-lon grid with cell centers; areas from spherical bands
  // bounded by the latitude midpoints.
  static GridSpec regular(std::size_t n_lon, std::size_t n_lat,
                          std::vector<double> levels_hpa);

  // The 64x32, 5.625-degree grid with levels 925...50 hPa.
  static GridSpec default_grid();

  std::size_t column(std::size_t j_lat, std::size_t i_lon) const {
    return j_lat * n_lon + i_lon;
  }
  std::size_t n_columns() const { return n_lat * n_lon; }
  std::size_t n_levels() const { return levels_hpa.size(); }

  void validate() const;  // throws std::invalid_argument on violations
};

}  // namespace enda
