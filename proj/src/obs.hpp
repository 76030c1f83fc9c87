#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geo.hpp"

namespace enda {

// Ratio of the molecular weight of water vapor to that of dry air.
inline constexpr double kEpsilonVapor = 0.622;

enum class ObsVar { U, V, T, Q, PS };

const char* obs_var_name(ObsVar v);
std::optional<ObsVar> parse_obs_var(const std::string& s);

struct Observation {
  std::int64_t time = 0;      // epoch seconds
  GeoPoint position;          // pressure_hpa is the vertical coordinate
  ObsVar variable = ObsVar::T;
  double value = 0.0;
  std::optional<double> error_std;  // mandatory after preprocessing
  std::optional<int> qmk;           // quality marker, [0, 15]
  double selection_weight = 1.0;    // filled by thinning
};

struct ObsBatch {
  std::vector<Observation> observations;
  std::int64_t window_center = 0;
  std::int64_t window_half_width = 1800;
};

// T = T_v / (1 + (1/eps - 1) Q). Throws std::domain_error on negative Q
// or non-positive T_v.
double virtual_to_real_temperature(double t_v_kelvin, double q_kgkg);

// Inverse map, T_v = T (1 + (1/eps - 1) Q).
double real_to_virtual_temperature(double t_kelvin, double q_kgkg);

// Buck equation, hPa from Celsius.
double saturation_vapor_pressure(double t_c);

// Converts a relative-humidity error (%) into a specific-humidity error
// (kg/kg) by chaining vapor-pressure relations. Throws std::domain_error
// when the vapor-pressure denominator is driven non-positive.
double rh_error_to_q_error(double p_hpa, double t_c, double q_kgkg,
                           double rh_err_percent);

// Fills error_std from the per-variable defaults when missing:
// U,V -> 1 m/s; T -> 1 K; Q -> 0.01 kg/kg; PS -> 1 hPa.
Observation assign_default_error(Observation obs);

// Observations with |time - center| <= half_width, boundaries inclusive.
// Relative input order is preserved.
ObsBatch select_window(const std::vector<Observation>& all_obs,
                       std::int64_t center,
                       std::int64_t half_width = 1800);

// Exchange format: CSV lines
//   time,lat_deg,lon_deg,level_hpa,var,value,error_std,qmk
// with '#' comments, empty trailing fields for missing error_std/qmk.
std::vector<Observation> read_obs_file(const std::string& path);
void write_obs_file(const std::vector<Observation>& obs,
                    const std::string& path);

}  // namespace enda
