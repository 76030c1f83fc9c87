#include "obs.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace enda {

const char* obs_var_name(ObsVar v) {
  switch (v) {
    case ObsVar::U: return "U";
    case ObsVar::V: return "V";
    case ObsVar::T: return "T";
    case ObsVar::Q: return "Q";
    case ObsVar::PS: return "PS";
  }
  return "?";
}

std::optional<ObsVar> parse_obs_var(const std::string& s) {
  if (s == "U") return ObsVar::U;
  if (s == "V") return ObsVar::V;
  if (s == "T") return ObsVar::T;
  if (s == "Q") return ObsVar::Q;
  if (s == "PS") return ObsVar::PS;
  return std::nullopt;
}

double virtual_to_real_temperature(double t_v_kelvin, double q_kgkg) {
  if (t_v_kelvin <= 0.0)
    throw std::domain_error("virtual_to_real_temperature: T_v must be positive");
  if (q_kgkg < 0.0 || q_kgkg >= 1.0)
    throw std::domain_error("virtual_to_real_temperature: Q outside [0, 1)");
  return t_v_kelvin / (1.0 + (1.0 / kEpsilonVapor - 1.0) * q_kgkg);
}

double real_to_virtual_temperature(double t_kelvin, double q_kgkg) {
  return t_kelvin * (1.0 + (1.0 / kEpsilonVapor - 1.0) * q_kgkg);
}

double saturation_vapor_pressure(double t_c) {
  if (t_c <= -257.14)
    throw std::domain_error("saturation_vapor_pressure: at or below formula pole");
  return 6.1121 * std::exp((18.678 - t_c / 234.5) * t_c / (257.14 + t_c));
}

namespace {
// Specific humidity from water vapor pressure at total pressure p.
double q_from_vapor_pressure(double p_hpa, double p_w) {
  const double denom = p_hpa - (1.0 - kEpsilonVapor) * p_w;
  if (denom <= 0.0)
    throw std::domain_error("rh_error_to_q_error: unphysical vapor pressure");
  return kEpsilonVapor * p_w / denom;
}
}  // namespace

double rh_error_to_q_error(double p_hpa, double t_c, double q_kgkg,
                           double rh_err_percent) {
  if (p_hpa <= 0.0)
    throw std::domain_error("rh_error_to_q_error: pressure must be positive");
  if (q_kgkg < 0.0 || q_kgkg >= 1.0)
    throw std::domain_error("rh_error_to_q_error: Q outside [0, 1)");
  if (rh_err_percent < 0.0)
    throw std::domain_error("rh_error_to_q_error: negative RH error");
  const double p_w =
      p_hpa * q_kgkg / (kEpsilonVapor + (1.0 - kEpsilonVapor) * q_kgkg);
  const double p_ws = saturation_vapor_pressure(t_c);
  const double p_werr = p_ws * rh_err_percent / 100.0;
  const double q_plus = q_from_vapor_pressure(p_hpa, p_w + p_werr);
  const double q_minus = q_from_vapor_pressure(p_hpa, p_w - p_werr);
  return 0.5 * (q_plus - q_minus);
}

Observation assign_default_error(Observation obs) {
  if (obs.error_std) return obs;
  switch (obs.variable) {
    case ObsVar::U:
    case ObsVar::V: obs.error_std = 1.0; break;   // m/s
    case ObsVar::T: obs.error_std = 1.0; break;   // K
    case ObsVar::Q: obs.error_std = 0.01; break;  // kg/kg
    case ObsVar::PS: obs.error_std = 1.0; break;  // hPa
  }
  return obs;
}

ObsBatch select_window(const std::vector<Observation>& all_obs,
                       std::int64_t center, std::int64_t half_width) {
  ObsBatch batch;
  batch.window_center = center;
  batch.window_half_width = half_width;
  for (const auto& o : all_obs) {
    const std::int64_t dt = o.time >= center ? o.time - center : center - o.time;
    if (dt <= half_width) batch.observations.push_back(o);
  }
  return batch;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no,
                    const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("obs file line " + std::to_string(line_no) +
                             ": bad " + what + " field '" + s + "'");
  }
}

}  // namespace

std::vector<Observation> read_obs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open obs file: " + path);
  std::vector<Observation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv(line);
    if (fields.size() < 7 || fields.size() > 8)
      throw std::runtime_error("obs file line " + std::to_string(line_no) +
                               ": expected 7 or 8 fields, got " +
                               std::to_string(fields.size()));
    Observation o;
    o.time = static_cast<std::int64_t>(
        parse_double(fields[0], line_no, "time"));
    o.position.lat_deg = parse_double(fields[1], line_no, "lat");
    o.position.lon_deg = normalize_lon(parse_double(fields[2], line_no, "lon"));
    o.position.pressure_hpa = parse_double(fields[3], line_no, "level");
    const auto var = parse_obs_var(fields[4]);
    if (!var)
      throw std::runtime_error("obs file line " + std::to_string(line_no) +
                               ": unknown variable code '" + fields[4] + "'");
    o.variable = *var;
    o.value = parse_double(fields[5], line_no, "value");
    if (!fields[6].empty())
      o.error_std = parse_double(fields[6], line_no, "error_std");
    if (fields.size() == 8 && !fields[7].empty()) {
      const int qmk = static_cast<int>(parse_double(fields[7], line_no, "qmk"));
      if (qmk < 0 || qmk > 15)
        throw std::runtime_error("obs file line " + std::to_string(line_no) +
                                 ": qmk outside [0, 15]");
      o.qmk = qmk;
    }
    out.push_back(o);
  }
  return out;
}

void write_obs_file(const std::vector<Observation>& obs,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write obs file: " + path);
  out << "# time,lat_deg,lon_deg,level_hpa,var,value,error_std,qmk\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& o : obs) {
    out << o.time << ',' << fmt(o.position.lat_deg) << ','
        << fmt(o.position.lon_deg) << ','
        << fmt(o.position.pressure_hpa.value_or(0.0)) << ','
        << obs_var_name(o.variable) << ',' << fmt(o.value) << ',';
    if (o.error_std) out << fmt(*o.error_std);
    out << ',';
    if (o.qmk) out << *o.qmk;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace enda
