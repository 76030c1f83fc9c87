#include "spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace enda {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;

// Largest longitude difference (degrees) that can still put two points
// within the cutoff, given that both latitudes are bounded in absolute
// value by abs_lat_max. Returns 360 when no bound applies.
double max_lon_span_deg(double cutoff_km, double abs_lat_max_deg) {
  const double theta = cutoff_km / kEarthRadiusKm;
  if (theta >= std::numbers::pi) return 360.0;
  const double s = std::sin(abs_lat_max_deg * kDegToRad);
  const double c2 = 1.0 - s * s;
  if (c2 < 1e-12) return 360.0;
  const double cos_dl = (std::cos(theta) - s * s) / c2;
  if (cos_dl <= -1.0) return 360.0;
  if (cos_dl >= 1.0) return 0.0;
  return std::acos(cos_dl) / kDegToRad;
}
}  // namespace

ObsSpatialIndex::ObsSpatialIndex(std::vector<GeoPoint> points,
                                 double cutoff_km)
    : cutoff_km_(cutoff_km), n_points_(points.size()) {
  band_height_deg_ = 5.0;
  n_bands_ = static_cast<std::size_t>(std::ceil(180.0 / band_height_deg_));
  bands_.resize(n_bands_);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double lat = points[i].lat_deg;
    auto b = static_cast<std::size_t>((lat + 90.0) / band_height_deg_);
    if (b >= n_bands_) b = n_bands_ - 1;
    bands_[b].push_back({normalize_lon(points[i].lon_deg), lat, i});
  }
  for (auto& band : bands_)
    std::sort(band.begin(), band.end(),
              [](const Entry& a, const Entry& b) { return a.lon < b.lon; });
}

std::vector<ObsSpatialIndex::Neighbor> ObsSpatialIndex::query(
    const GeoPoint& p) const {
  std::vector<Neighbor> out;
  const double lat_margin_deg =
      cutoff_km_ / kEarthRadiusKm / kDegToRad;  // meridional reach
  const double lat_lo = p.lat_deg - lat_margin_deg;
  const double lat_hi = p.lat_deg + lat_margin_deg;
  const double plon = normalize_lon(p.lon_deg);
  const GeoPoint pq{p.lat_deg, plon, std::nullopt};

  auto b_lo = static_cast<long>(std::floor((lat_lo + 90.0) / band_height_deg_));
  auto b_hi = static_cast<long>(std::floor((lat_hi + 90.0) / band_height_deg_));
  b_lo = std::max<long>(b_lo, 0);
  b_hi = std::min<long>(b_hi, static_cast<long>(n_bands_) - 1);

  for (long b = b_lo; b <= b_hi; ++b) {
    const auto& band = bands_[static_cast<std::size_t>(b)];
    if (band.empty()) continue;
    const double band_lat_lo = -90.0 + band_height_deg_ * static_cast<double>(b);
    const double band_lat_hi = band_lat_lo + band_height_deg_;
    const double abs_lat_max = std::max(
        {std::abs(p.lat_deg), std::abs(band_lat_lo), std::abs(band_lat_hi)});
    const double span = max_lon_span_deg(cutoff_km_, abs_lat_max);

    auto check = [&](const Entry& e) {
      GeoPoint q{e.lat, e.lon, std::nullopt};
      const double d = great_circle_km(pq, q);
      if (d < cutoff_km_) out.push_back({e.idx, d});
    };

    if (span >= 180.0) {
      for (const auto& e : band) check(e);
      continue;
    }
    // Longitude window [plon - span, plon + span], possibly wrapping.
    double lo = plon - span, hi = plon + span;
    auto scan = [&](double a, double c) {
      auto first = std::lower_bound(
          band.begin(), band.end(), a,
          [](const Entry& e, double v) { return e.lon < v; });
      for (auto it = first; it != band.end() && it->lon <= c; ++it) check(*it);
    };
    if (lo < 0.0) {
      scan(lo + 360.0, 360.0);
      scan(0.0, hi);
    } else if (hi >= 360.0) {
      scan(lo, 360.0);
      scan(0.0, hi - 360.0);
    } else {
      scan(lo, hi);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.idx < b.idx; });
  return out;
}

}  // namespace enda
