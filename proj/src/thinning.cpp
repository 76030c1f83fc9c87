#include "thinning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "spatial_index.hpp"

namespace enda {

double distance_weight(double d_h_km, double d_v_logp, double r_h_km,
                       double r_v_logp) {
  return taper_weight(d_h_km, d_v_logp, r_h_km, r_v_logp);
}

double quality_weight(std::optional<int> qmk) {
  if (!qmk) return 0.4;
  if (*qmk < 0 || *qmk > 15)
    throw std::domain_error("quality_weight: qmk outside [0, 15]");
  switch (*qmk) {
    case 0: return 1.0;
    case 1: return 0.8;
    case 2: return 0.4;
    case 3: return 0.1;
    default: return 0.0;  // not recommended for use
  }
}

double contribution(double w_ij, double density_sel, double w_max,
                    double epsilon) {
  return std::max(0.0, w_ij * (w_max - density_sel) / (density_sel + epsilon));
}

namespace {

struct Edge {
  std::size_t node;
  double w;  // undecayed w_{i,j} = w_d * w_q
};

// One variable's selection problem.
struct VariableProblem {
  std::vector<std::size_t> batch_idx;            // local -> batch index
  std::vector<std::vector<Edge>> obs_edges;      // per local obs
  std::vector<std::vector<std::size_t>> node_obs;  // per node, local obs ids
  std::vector<std::vector<std::pair<std::size_t, double>>> obs_obs;  // (j', w_d)
  std::vector<double> density_all;
  std::size_t n_levels = 1;
};

void run_greedy(VariableProblem& p, const ThinningConfig& cfg,
                VariableThinning& out, std::vector<char>& selected_mask,
                std::vector<double>& selection_weight) {
  const std::size_t m = p.batch_idx.size();
  const std::size_t n_nodes = p.density_all.size();
  std::vector<double> density_sel(n_nodes, 0.0);
  std::vector<double> decay(m, 1.0);
  std::vector<char> chosen(m, 0);
  std::vector<char> flag(m, 1);
  std::vector<double> c_max(m, 0.0);

  auto recompute = [&](std::size_t j) {
    double best = 0.0;
    const double dj = decay[j];
    for (const auto& e : p.obs_edges[j]) {
      const double c =
          contribution(e.w * dj, density_sel[e.node], cfg.w_max, cfg.epsilon);
      if (c > best) best = c;
    }
    c_max[j] = best;
  };

  while (!cfg.m_thresh || out.selected.size() < *cfg.m_thresh) {
    for (std::size_t j = 0; j < m; ++j) {
      if (chosen[j]) continue;
      if (cfg.use_update_flags && !flag[j]) continue;
      flag[j] = 0;
      recompute(j);
    }
    std::size_t best_j = m;
    double best_c = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (chosen[j]) continue;
      if (c_max[j] > best_c) {
        best_c = c_max[j];
        best_j = j;
      }
    }
    if (best_j == m || best_c < cfg.c_thresh || best_c <= 0.0) break;

    chosen[best_j] = 1;
    out.selected.push_back(p.batch_idx[best_j]);
    selected_mask[p.batch_idx[best_j]] = 1;
    selection_weight[p.batch_idx[best_j]] =
        std::min(1.0, decay[best_j]);

    bool saturated = false;
    for (const auto& e : p.obs_edges[best_j]) {
      density_sel[e.node] += e.w * decay[best_j];
      if (density_sel[e.node] > cfg.w_max) saturated = true;
    }
    if (cfg.global_saturation_exit && saturated) break;

    // Weight decay around the selection (includes the selection itself,
    // whose weight drops to zero).
    for (const auto& [jp, w_d] : p.obs_obs[best_j]) decay[jp] *= decay_factor(w_d);

    // Re-flag every observation whose contribution may have changed:
    // anything sharing a local grid node with the selection.
    for (const auto& e : p.obs_edges[best_j])
      for (std::size_t jp : p.node_obs[e.node]) flag[jp] = 1;
    for (const auto& [jp, w_d] : p.obs_obs[best_j]) flag[jp] = 1;
  }
  out.density_sel = std::move(density_sel);
}

}  // namespace

ThinningResult thin(const ObsBatch& obs, const GridSpec& grid,
                    const ThinningConfig& cfg) {
  ThinningResult result;
  result.selected.window_center = obs.window_center;
  result.selected.window_half_width = obs.window_half_width;

  const double cutoff_h = kCutoffFactor * cfg.r_h_km;
  const double cutoff_v = kCutoffFactor * cfg.r_v_logp;
  const std::size_t n_cols = grid.n_columns();

  std::vector<char> selected_mask(obs.observations.size(), 0);
  std::vector<double> selection_weight(obs.observations.size(), 0.0);

  for (ObsVar var : {ObsVar::U, ObsVar::V, ObsVar::T, ObsVar::Q, ObsVar::PS}) {
    VariableProblem p;
    std::vector<GeoPoint> positions;
    for (std::size_t b = 0; b < obs.observations.size(); ++b) {
      const auto& o = obs.observations[b];
      if (o.variable != var) continue;
      if (quality_weight(o.qmk) <= 0.0) continue;  // never selectable
      p.batch_idx.push_back(b);
      positions.push_back(o.position);
    }
    if (p.batch_idx.empty()) continue;
    const std::size_t m = p.batch_idx.size();

    const bool surface = var == ObsVar::PS;
    p.n_levels = surface ? 1 : grid.n_levels();
    const std::size_t n_nodes = n_cols * p.n_levels;
    p.obs_edges.resize(m);
    p.node_obs.resize(n_nodes);
    p.obs_obs.resize(m);
    p.density_all.assign(n_nodes, 0.0);

    ObsSpatialIndex index(positions, cutoff_h);

    // Grid-node adjacency: query once per column, expand per level.
    for (std::size_t col = 0; col < n_cols; ++col) {
      const std::size_t j_lat = col / grid.n_lon;
      const std::size_t i_lon = col % grid.n_lon;
      const GeoPoint center{grid.lat_deg[j_lat], grid.lon_deg[i_lon],
                            std::nullopt};
      for (const auto& nb : index.query(center)) {
        const double wq =
            quality_weight(obs.observations[p.batch_idx[nb.idx]].qmk);
        const double obs_p =
            positions[nb.idx].pressure_hpa.value_or(grid.levels_hpa.front());
        for (std::size_t lev = 0; lev < p.n_levels; ++lev) {
          const double d_v =
              surface ? 0.0
                      : log_pressure_distance(obs_p, grid.levels_hpa[lev]);
          const double w_d =
              distance_weight(nb.d_km, d_v, cfg.r_h_km, cfg.r_v_logp);
          if (w_d <= 0.0) continue;
          const std::size_t node = col * p.n_levels + lev;
          const double w = w_d * wq;
          p.obs_edges[nb.idx].push_back({node, w});
          p.node_obs[node].push_back(nb.idx);
          p.density_all[node] += w;
        }
      }
    }

    // Observation-pair adjacency for weight decay.
    for (std::size_t j = 0; j < m; ++j) {
      for (const auto& nb : index.query(positions[j])) {
        double d_v = 0.0;
        if (!surface) {
          const double pj =
              positions[j].pressure_hpa.value_or(grid.levels_hpa.front());
          const double pk =
              positions[nb.idx].pressure_hpa.value_or(grid.levels_hpa.front());
          d_v = log_pressure_distance(pj, pk);
        }
        const double w_d =
            distance_weight(nb.d_km, d_v, cfg.r_h_km, cfg.r_v_logp);
        if (w_d > 0.0) p.obs_obs[j].push_back({nb.idx, w_d});
      }
    }

    VariableThinning vt;
    vt.var = var;
    vt.n_levels = p.n_levels;
    vt.density_all = p.density_all;
    run_greedy(p, cfg, vt, selected_mask, selection_weight);
    result.per_variable.push_back(std::move(vt));
  }

  for (std::size_t b = 0; b < obs.observations.size(); ++b) {
    if (!selected_mask[b]) continue;
    Observation o = obs.observations[b];
    o.selection_weight = selection_weight[b];
    result.selected.observations.push_back(std::move(o));
  }
  return result;
}

void write_density_report(const ThinningResult& result, const GridSpec& grid,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write density report: " + path);
  out << "var,lat_deg,lon_deg,level_hpa,density_all,density_sel\n";
  for (const auto& vt : result.per_variable) {
    for (std::size_t node = 0; node < vt.density_all.size(); ++node) {
      const std::size_t col = node / vt.n_levels;
      const std::size_t lev = node % vt.n_levels;
      const std::size_t j_lat = col / grid.n_lon;
      const std::size_t i_lon = col % grid.n_lon;
      out << obs_var_name(vt.var) << ',' << grid.lat_deg[j_lat] << ','
          << grid.lon_deg[i_lon] << ','
          << (vt.n_levels == 1 ? 0.0 : grid.levels_hpa[lev]) << ','
          << vt.density_all[node] << ',' << vt.density_sel[node] << '\n';
    }
  }
}

}  // namespace enda
