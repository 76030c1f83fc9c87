#include "state.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace enda {

std::size_t StateLayout::size() const {
  std::size_t n = 0;
  for (const auto& v : vars) n += v.n_levels * grid.n_lat * grid.n_lon;
  return n;
}

std::size_t StateLayout::var_offset(std::size_t v) const {
  std::size_t off = 0;
  for (std::size_t k = 0; k < v; ++k)
    off += vars[k].n_levels * grid.n_lat * grid.n_lon;
  return off;
}

std::size_t StateLayout::index(std::size_t v, std::size_t level,
                               std::size_t j_lat, std::size_t i_lon) const {
  return var_offset(v) +
         ((level * grid.n_lat) + j_lat) * grid.n_lon + i_lon;
}

std::size_t StateLayout::find_var(ObsVar var) const {
  for (std::size_t v = 0; v < vars.size(); ++v)
    if (vars[v].var == var) return v;
  return npos;
}

namespace {

struct HorizWeights {
  std::size_t j0, j1, i0, i1;
  double wj, wi;  // weight of j1 / i1
};

HorizWeights horizontal_weights(const GridSpec& g, const GeoPoint& p) {
  HorizWeights w{};
  const auto& lats = g.lat_deg;
  if (p.lat_deg <= lats.front()) {
    w.j0 = w.j1 = 0;
    w.wj = 0.0;
  } else if (p.lat_deg >= lats.back()) {
    w.j0 = w.j1 = g.n_lat - 1;
    w.wj = 0.0;
  } else {
    std::size_t j = 0;
    while (j + 1 < g.n_lat && lats[j + 1] < p.lat_deg) ++j;
    w.j0 = j;
    w.j1 = j + 1;
    w.wj = (p.lat_deg - lats[j]) / (lats[j + 1] - lats[j]);
  }
  const double lon = normalize_lon(p.lon_deg);
  std::size_t i = g.n_lon - 1;
  for (std::size_t k = 0; k + 1 < g.n_lon; ++k) {
    if (g.lon_deg[k] <= lon && lon < g.lon_deg[k + 1]) {
      i = k;
      break;
    }
  }
  w.i0 = i;
  w.i1 = (i + 1) % g.n_lon;
  const double lon0 = g.lon_deg[w.i0];
  double span = g.lon_deg[w.i1] - lon0;
  if (span <= 0.0) span += 360.0;
  double frac = lon - lon0;
  if (frac < 0.0) frac += 360.0;
  w.wi = span > 0.0 ? frac / span : 0.0;
  return w;
}

double bilinear(const Eigen::Ref<const Eigen::VectorXd>& state,
                const StateLayout& layout, std::size_t v, std::size_t level,
                const HorizWeights& w) {
  const double f00 = state[layout.index(v, level, w.j0, w.i0)];
  const double f01 = state[layout.index(v, level, w.j0, w.i1)];
  const double f10 = state[layout.index(v, level, w.j1, w.i0)];
  const double f11 = state[layout.index(v, level, w.j1, w.i1)];
  return (1.0 - w.wj) * ((1.0 - w.wi) * f00 + w.wi * f01) +
         w.wj * ((1.0 - w.wi) * f10 + w.wi * f11);
}

}  // namespace

ObserveResult observe(const StateLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state,
                      const GeoPoint& point, ObsVar variable) {
  const std::size_t v = layout.find_var(variable);
  if (v == StateLayout::npos)
    throw std::invalid_argument("observe: variable not present in state");
  const auto hw = horizontal_weights(layout.grid, point);
  ObserveResult r;
  if (variable == ObsVar::PS || layout.vars[v].n_levels == 1) {
    r.value = bilinear(state, layout, v, 0, hw);
    return r;
  }
  if (!point.pressure_hpa)
    throw std::invalid_argument("observe: upper-air obs without pressure");
  const auto& levels = layout.grid.levels_hpa;
  double p = *point.pressure_hpa;
  if (p >= levels.front()) {
    r.clamped = p > levels.front();
    r.value = bilinear(state, layout, v, 0, hw);
    return r;
  }
  if (p <= levels.back()) {
    r.clamped = p < levels.back();
    r.value = bilinear(state, layout, v, levels.size() - 1, hw);
    return r;
  }
  std::size_t l = 0;
  while (l + 1 < levels.size() && levels[l + 1] > p) ++l;
  const double f0 = bilinear(state, layout, v, l, hw);
  const double f1 = bilinear(state, layout, v, l + 1, hw);
  const double t = (std::log(levels[l]) - std::log(p)) /
                   (std::log(levels[l]) - std::log(levels[l + 1]));
  r.value = (1.0 - t) * f0 + t * f1;
  return r;
}

void write_state_file(const std::string& path_base, const StateLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state,
                      std::int64_t time) {
  if (static_cast<std::size_t>(state.size()) != layout.size())
    throw std::invalid_argument("write_state_file: size mismatch");
  nlohmann::json header;
  header["dims"] = {{"n_lon", layout.grid.n_lon},
                    {"n_lat", layout.grid.n_lat},
                    {"levels_hpa", layout.grid.levels_hpa}};
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : layout.vars)
    vars.push_back({{"name", obs_var_name(v.var)}, {"levels", v.n_levels}});
  header["variables"] = vars;
  header["time"] = time;
  {
    std::ofstream jf(path_base + ".json");
    if (!jf) throw std::runtime_error("cannot write " + path_base + ".json");
    jf << header.dump(2) << '\n';
  }
  std::ofstream bf(path_base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + path_base + ".bin");
  std::vector<float> buf(state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    buf[static_cast<std::size_t>(i)] = static_cast<float>(state[i]);
  bf.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!bf) throw std::runtime_error("write failed: " + path_base + ".bin");
}

StateFile read_state_file(const std::string& path_base) {
  std::ifstream jf(path_base + ".json");
  if (!jf) throw std::runtime_error("cannot open " + path_base + ".json");
  nlohmann::json header = nlohmann::json::parse(jf);

  StateFile out;
  const auto& dims = header.at("dims");
  out.layout.grid = GridSpec::regular(
      dims.at("n_lon").get<std::size_t>(), dims.at("n_lat").get<std::size_t>(),
      dims.at("levels_hpa").get<std::vector<double>>());
  for (const auto& v : header.at("variables")) {
    const auto var = parse_obs_var(v.at("name").get<std::string>());
    if (!var) throw std::runtime_error("state file: unknown variable name");
    out.layout.vars.push_back({*var, v.at("levels").get<std::size_t>()});
  }
  out.time = header.at("time").get<std::int64_t>();

  const std::size_t n = out.layout.size();
  std::ifstream bf(path_base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open " + path_base + ".bin");
  std::vector<float> buf(n);
  bf.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::size_t>(bf.gcount()) != n * sizeof(float))
    throw std::runtime_error("state file truncated: " + path_base + ".bin");
  out.state.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    out.state[static_cast<Eigen::Index>(i)] = static_cast<double>(buf[i]);
  return out;
}

void write_ring_state(const std::string& path,
                      const Eigen::Ref<const Eigen::VectorXd>& state) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", state[i]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Eigen::VectorXd read_ring_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    vals.push_back(std::stod(line));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = vals[i];
  return v;
}

}  // namespace enda
