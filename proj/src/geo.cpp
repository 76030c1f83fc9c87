#include "geo.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace enda {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

double normalize_lon(double lon_deg) {
  double lon = std::fmod(lon_deg, 360.0);
  if (lon < 0.0) lon += 360.0;
  return lon;
}

double great_circle_km(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat_deg * kDegToRad;
  const double phi2 = b.lat_deg * kDegToRad;
  const double dlon = (normalize_lon(b.lon_deg) - normalize_lon(a.lon_deg)) * kDegToRad;

  // Vincenty central-angle form: well conditioned at both tiny and
  // antipodal separations, unlike plain haversine/acos.
  const double sin_phi1 = std::sin(phi1), cos_phi1 = std::cos(phi1);
  const double sin_phi2 = std::sin(phi2), cos_phi2 = std::cos(phi2);
  const double sin_dl = std::sin(dlon), cos_dl = std::cos(dlon);

  const double y = std::hypot(cos_phi2 * sin_dl,
                              cos_phi1 * sin_phi2 - sin_phi1 * cos_phi2 * cos_dl);
  const double x = sin_phi1 * sin_phi2 + cos_phi1 * cos_phi2 * cos_dl;
  return kEarthRadiusKm * std::atan2(y, x);
}

double log_pressure_distance(double p1_hpa, double p2_hpa) {
  if (p1_hpa <= 0.0 || p2_hpa <= 0.0)
    throw std::domain_error("log_pressure_distance: pressures must be positive");
  return std::abs(std::log(p1_hpa) - std::log(p2_hpa));
}

std::vector<double> latitude_weights(const std::vector<double>& lats_deg) {
  if (lats_deg.empty())
    throw std::domain_error("latitude_weights: empty latitude list");
  double sum = 0.0;
  std::vector<double> cosines(lats_deg.size());
  for (std::size_t j = 0; j < lats_deg.size(); ++j) {
    cosines[j] = std::cos(lats_deg[j] * kDegToRad);
    sum += cosines[j];
  }
  const double mean = sum / static_cast<double>(lats_deg.size());
  if (mean <= 0.0)
    throw std::domain_error("latitude_weights: degenerate grid, mean cosine is zero");
  for (double& c : cosines) c /= mean;
  return cosines;
}

double taper_weight(double d_h_km, double d_v_logp, double r_h_km,
                    double r_v_logp) {
  if (d_h_km >= kCutoffFactor * r_h_km || d_v_logp >= kCutoffFactor * r_v_logp)
    return 0.0;
  const double h = d_h_km / r_h_km;
  const double v = d_v_logp / r_v_logp;
  return std::exp(-0.5 * (h * h + v * v));
}

GridSpec GridSpec::regular(std::size_t n_lon, std::size_t n_lat,
                           std::vector<double> levels_hpa) {
  if (n_lon == 0 || n_lat == 0)
    throw std::invalid_argument("GridSpec::regular: empty grid");
  GridSpec g;
  g.n_lon = n_lon;
  g.n_lat = n_lat;
  g.lon_deg.resize(n_lon);
  for (std::size_t i = 0; i < n_lon; ++i)
    g.lon_deg[i] = 360.0 * static_cast<double>(i) / static_cast<double>(n_lon);
  const double dlat = 180.0 / static_cast<double>(n_lat);
  g.lat_deg.resize(n_lat);
  g.cell_area.resize(n_lat);
  const double dlon_rad = 2.0 * std::numbers::pi / static_cast<double>(n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double edge_s = -90.0 + dlat * static_cast<double>(j);
    const double edge_n = edge_s + dlat;
    g.lat_deg[j] = 0.5 * (edge_s + edge_n);
    g.cell_area[j] = kEarthRadiusKm * kEarthRadiusKm * dlon_rad *
                     (std::sin(edge_n * kDegToRad) - std::sin(edge_s * kDegToRad));
  }
  g.levels_hpa = std::move(levels_hpa);
  g.lat_weight = latitude_weights(g.lat_deg);
  g.validate();
  return g;
}

GridSpec GridSpec::default_grid() {
  return regular(64, 32, {925.0, 850.0, 700.0, 600.0, 500.0, 250.0, 50.0});
}

void GridSpec::validate() const {
  if (lon_deg.size() != n_lon || lat_deg.size() != n_lat ||
      cell_area.size() != n_lat || lat_weight.size() != n_lat)
    throw std::invalid_argument("GridSpec: inconsistent array lengths");
  for (double a : cell_area)
    if (!(a > 0.0)) throw std::invalid_argument("GridSpec: non-positive cell area");
  for (std::size_t l = 1; l < levels_hpa.size(); ++l)
    if (!(levels_hpa[l] < levels_hpa[l - 1]))
      throw std::invalid_argument("GridSpec: levels must strictly decrease");
  double mean_w = 0.0;
  for (double w : lat_weight) mean_w += w;
  mean_w /= static_cast<double>(n_lat);
  if (std::abs(mean_w - 1.0) > 1e-12)
    throw std::invalid_argument("GridSpec: latitude weights are not normalized");
}

}  // namespace enda
