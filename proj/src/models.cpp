#include "models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace enda {

void Lorenz96Config::validate() const {
  if (n < 4) throw std::invalid_argument("Lorenz96Config: n must be >= 4");
  if (!(dt > 0.0)) throw std::invalid_argument("Lorenz96Config: dt must be positive");
}

Eigen::VectorXd lorenz96_tendency(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  double forcing) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd dx(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double xp1 = x[(j + 1) % n];
    const double xm1 = x[(j - 1 + n) % n];
    const double xm2 = x[(j - 2 + n) % n];
    dx[j] = (xp1 - xm2) * xm1 - x[j] + forcing;
  }
  return dx;
}

Eigen::VectorXd lorenz96_step(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Lorenz96Config& cfg) {
  if (x.size() != cfg.n)
    throw std::invalid_argument("lorenz96_step: state size mismatch");
  if (!x.allFinite())
    throw std::runtime_error("lorenz96_step: non-finite input state");
  const double dt = cfg.dt;
  const Eigen::VectorXd k1 = lorenz96_tendency(x, cfg.forcing);
  const Eigen::VectorXd k2 = lorenz96_tendency(x + 0.5 * dt * k1, cfg.forcing);
  const Eigen::VectorXd k3 = lorenz96_tendency(x + 0.5 * dt * k2, cfg.forcing);
  const Eigen::VectorXd k4 = lorenz96_tendency(x + dt * k3, cfg.forcing);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void SurrogateConfig::validate() const {
  if (layout.vars.empty())
    throw std::invalid_argument("SurrogateConfig: empty layout");
  if (level_speed.size() != layout.grid.n_levels())
    throw std::invalid_argument("SurrogateConfig: one speed per level required");
  if (relax_rate < 0.0 || relax_rate > 1.0)
    throw std::invalid_argument("SurrogateConfig: relax_rate outside [0, 1]");
  if (diffusion < 0.0 || diffusion >= 0.25)
    throw std::invalid_argument(
        "SurrogateConfig: diffusion outside the stable range [0, 0.25)");
  if (static_cast<std::size_t>(climatology.size()) != layout.size())
    throw std::invalid_argument("SurrogateConfig: climatology size mismatch");
}

namespace {

// Semi-Lagrangian zonal shift of one lat/lon plane by `speed` cells,
// linear interpolation at the departure point. Conserves the plane sum.
void advect_plane(double* plane, std::size_t n_lat, std::size_t n_lon,
                  double speed) {
  if (speed == 0.0) return;
  const double si = std::floor(speed);
  const double frac = speed - si;
  const auto shift = static_cast<long>(si);
  std::vector<double> row(n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    double* r = plane + j * n_lon;
    for (std::size_t i = 0; i < n_lon; ++i) {
      const long i0 =
          ((static_cast<long>(i) - shift) % static_cast<long>(n_lon) +
           static_cast<long>(n_lon)) %
          static_cast<long>(n_lon);
      const long im1 = (i0 - 1 + static_cast<long>(n_lon)) %
                       static_cast<long>(n_lon);
      row[i] = (1.0 - frac) * r[i0] + frac * r[im1];
    }
    for (std::size_t i = 0; i < n_lon; ++i) r[i] = row[i];
  }
}

// Explicit diffusion, periodic in longitude, no-flux in latitude.
// The reflective latitude boundary keeps the plane sum unchanged.
void diffuse_plane(double* plane, std::size_t n_lat, std::size_t n_lon,
                   double kappa) {
  if (kappa == 0.0) return;
  std::vector<double> out(n_lat * n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    const std::size_t jm = j == 0 ? 0 : j - 1;
    const std::size_t jp = j == n_lat - 1 ? n_lat - 1 : j + 1;
    for (std::size_t i = 0; i < n_lon; ++i) {
      const std::size_t im = (i + n_lon - 1) % n_lon;
      const std::size_t ip = (i + 1) % n_lon;
      const double c = plane[j * n_lon + i];
      const double lap = plane[j * n_lon + im] + plane[j * n_lon + ip] +
                         plane[jm * n_lon + i] + plane[jp * n_lon + i] -
                         4.0 * c;
      out[j * n_lon + i] = c + kappa * lap;
    }
  }
  std::copy(out.begin(), out.end(), plane);
}

}  // namespace

Eigen::VectorXd surrogate_step(const Eigen::Ref<const Eigen::VectorXd>& state,
                               const SurrogateConfig& cfg) {
  if (static_cast<std::size_t>(state.size()) != cfg.layout.size())
    throw std::invalid_argument("surrogate_step: state size mismatch");
  Eigen::VectorXd out = state;
  const auto& g = cfg.layout.grid;
  for (std::size_t v = 0; v < cfg.layout.vars.size(); ++v) {
    const std::size_t n_levels = cfg.layout.vars[v].n_levels;
    for (std::size_t lev = 0; lev < n_levels; ++lev) {
      double* plane = out.data() + cfg.layout.index(v, lev, 0, 0);
      const double speed =
          n_levels == 1 ? cfg.surface_speed : cfg.level_speed[lev];
      advect_plane(plane, g.n_lat, g.n_lon, speed);
      diffuse_plane(plane, g.n_lat, g.n_lon, cfg.diffusion);
    }
  }
  if (cfg.relax_rate > 0.0)
    out = (1.0 - cfg.relax_rate) * out + cfg.relax_rate * cfg.climatology;
  return out;
}

Eigen::VectorXd default_surrogate_climatology(const StateLayout& layout) {
  Eigen::VectorXd clim(static_cast<Eigen::Index>(layout.size()));
  const auto& g = layout.grid;
  for (std::size_t v = 0; v < layout.vars.size(); ++v) {
    const auto var = layout.vars[v].var;
    const std::size_t n_levels = layout.vars[v].n_levels;
    for (std::size_t lev = 0; lev < n_levels; ++lev) {
      const double depth =
          n_levels == 1 ? 1.0
                        : g.levels_hpa[lev] / g.levels_hpa.front();
      for (std::size_t j = 0; j < g.n_lat; ++j) {
        const double phi = g.lat_deg[j] * std::numbers::pi / 180.0;
        for (std::size_t i = 0; i < g.n_lon; ++i) {
          const double lam = g.lon_deg[i] * std::numbers::pi / 180.0;
          double value = 0.0;
          switch (var) {
            case ObsVar::T:
              value = 210.0 + 80.0 * depth * std::cos(phi) +
                      2.0 * std::cos(2.0 * lam) * std::cos(phi);
              break;
            case ObsVar::U:
              value = 15.0 * std::sin(2.0 * phi) * std::sin(2.0 * phi) *
                      (1.2 - depth);
              break;
            case ObsVar::V:
              value = 3.0 * std::sin(2.0 * phi) * std::cos(lam);
              break;
            case ObsVar::Q:
              value = 0.015 * depth * std::cos(phi) * std::cos(phi);
              break;
            case ObsVar::PS:
              value = 1000.0 - 30.0 * std::sin(phi) * std::sin(phi) +
                      5.0 * std::cos(phi) * std::sin(lam);
              break;
          }
          clim[static_cast<Eigen::Index>(layout.index(v, lev, j, i))] = value;
        }
      }
    }
  }
  return clim;
}

Eigen::VectorXd smooth_random_field(const StateLayout& layout,
                                    const CounterRng& rng, std::uint64_t tag,
                                    double magnitude, int smoothing_passes) {
  const std::size_t n = layout.size();
  Eigen::VectorXd field(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    field[static_cast<Eigen::Index>(i)] = rng.normal(tag, i, 0x5f1e1dULL);
  const auto& g = layout.grid;
  const std::size_t plane_n = g.n_lat * g.n_lon;
  for (std::size_t v = 0; v < layout.vars.size(); ++v)
    for (std::size_t lev = 0; lev < layout.vars[v].n_levels; ++lev) {
      double* plane = field.data() + layout.index(v, lev, 0, 0);
      for (int p = 0; p < smoothing_passes; ++p)
        diffuse_plane(plane, g.n_lat, g.n_lon, 0.2);
      // Normalize each plane to the requested pointwise std.
      auto m = Eigen::Map<Eigen::VectorXd>(plane, static_cast<Eigen::Index>(plane_n));
      const double mean = m.mean();
      const double sd = std::sqrt((m.array() - mean).square().mean());
      if (sd > 0.0) m = (m.array() - mean) * (magnitude / sd);
    }
  return field;
}

std::vector<Eigen::VectorXd> nature_run(const ForecastModel& model,
                                        const Eigen::VectorXd& initial_state,
                                        std::size_t n_steps) {
  std::vector<Eigen::VectorXd> traj;
  traj.reserve(n_steps + 1);
  traj.push_back(initial_state);
  Eigen::VectorXd state = initial_state;
  for (std::size_t s = 1; s <= n_steps; ++s) {
    model.step(state);
    if (!state.allFinite())
      throw std::runtime_error("nature_run: non-finite state at step " +
                               std::to_string(s));
    traj.push_back(state);
  }
  return traj;
}

std::vector<NetworkEntry> make_random_network(
    const GridSpec& grid, const std::map<ObsVar, std::size_t>& counts,
    std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<NetworkEntry> network;
  std::uint64_t c = 0;
  for (const auto& [var, count] : counts) {
    for (std::size_t i = 0; i < count; ++i, ++c) {
      NetworkEntry e;
      e.var = var;
      // Uniform on the sphere.
      const double u = rng.uniform(c, 0, 0xa11);
      e.point.lat_deg =
          std::asin(2.0 * u - 1.0) * 180.0 / std::numbers::pi;
      e.point.lon_deg = 360.0 * rng.uniform(c, 1, 0xa11);
      if (var != ObsVar::PS) {
        const double lp_top = std::log(grid.levels_hpa.back());
        const double lp_bot = std::log(grid.levels_hpa.front());
        const double t = rng.uniform(c, 2, 0xa11);
        e.point.pressure_hpa = std::exp(lp_top + t * (lp_bot - lp_top));
      }
      network.push_back(e);
    }
  }
  return network;
}

ObsBatch synth_obs_grid(const StateLayout& layout,
                        const Eigen::Ref<const Eigen::VectorXd>& truth,
                        const std::vector<NetworkEntry>& network,
                        const std::map<ObsVar, double>& error_std,
                        const CounterRng& rng, std::uint64_t cycle,
                        std::int64_t time) {
  ObsBatch batch;
  batch.window_center = time;
  for (std::size_t j = 0; j < network.size(); ++j) {
    const auto& e = network[j];
    const auto it = error_std.find(e.var);
    if (it == error_std.end() || it->second <= 0.0)
      throw std::invalid_argument("synth_obs_grid: missing or bad error_std");
    Observation o;
    o.time = time;
    o.position = e.point;
    o.variable = e.var;
    const double clean = observe(layout, truth, e.point, e.var).value;
    o.value = clean + it->second * rng.normal(cycle, j, 0x0b5);
    o.error_std = it->second;
    o.qmk = 0;
    if (e.var == ObsVar::PS) o.position.pressure_hpa = o.value;
    batch.observations.push_back(std::move(o));
  }
  return batch;
}

std::vector<RingObs> synth_obs_ring(
    const Eigen::Ref<const Eigen::VectorXd>& truth,
    const std::vector<std::size_t>& indices, double error_std,
    const CounterRng& rng, std::uint64_t cycle) {
  if (error_std <= 0.0)
    throw std::invalid_argument("synth_obs_ring: error_std must be positive");
  std::vector<RingObs> out;
  out.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    RingObs o;
    o.index = indices[j];
    o.value = truth[static_cast<Eigen::Index>(indices[j])] +
              error_std * rng.normal(cycle, j, 0x0b5);
    o.error_std = error_std;
    out.push_back(o);
  }
  return out;
}

}  // namespace enda
