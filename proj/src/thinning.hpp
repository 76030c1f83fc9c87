#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "geo.hpp"
#include "obs.hpp"

namespace enda {

struct ThinningConfig {
  double r_h_km = 500.0;
  double r_v_logp = 0.1;
  double w_max = 1.0;
  double c_thresh = 0.01;
  std::optional<std::size_t> m_thresh;  // unbounded when absent
  double epsilon = 1e-10;
  // Literal pseudocode behavior: stop the whole selection once any grid
  // density saturates. Default follows the prose (saturation only zeroes
  // contributions near that grid).
  bool global_saturation_exit = false;
  // Disable the update-flag optimization (recompute every contribution
  // each iteration); must not change the selection.
  bool use_update_flags = true;
};

// Gaussian distance weight with the sqrt(10/3) hard cutoff.
double distance_weight(double d_h_km, double d_v_logp, double r_h_km,
                       double r_v_logp);

// Quality-marker weight: 0->1.0, 1->0.8, 2->0.4, 3->0.1, missing->0.4,
// 4..15 -> 0. Throws std::domain_error outside [0, 15].
double quality_weight(std::optional<int> qmk);

// Impact of selecting an observation on one grid density:
// max(0, w_ij * (w_max - density_sel) / (density_sel + eps)).
double contribution(double w_ij, double density_sel, double w_max,
                    double epsilon);

// Weight multiplier applied to observations local to a just-selected one.
inline double decay_factor(double w_d) { return (1.0 - w_d) * (1.0 - w_d); }

// Per-variable diagnostics of one thinning run. Grid nodes are
// (column, level) pairs flattened as column * n_levels + level;
// surface pressure uses one node per column.
struct VariableThinning {
  ObsVar var = ObsVar::T;
  std::size_t n_levels = 1;
  std::vector<double> density_all;        // W_all per grid node
  std::vector<double> density_sel;        // final W-tilde per grid node
  std::vector<std::size_t> selected;      // batch indices, selection order
};

struct ThinningResult {
  ObsBatch selected;  // subset of the input, original order preserved
  std::vector<VariableThinning> per_variable;
};

// Greedy selection maximizing homogeneity, run independently per
// variable kind. Deterministic: ties broken by lowest batch index.
ThinningResult thin(const ObsBatch& obs, const GridSpec& grid,
                    const ThinningConfig& cfg);

// Per-grid density report (CSV): variable, column lat/lon, level,
// W_all, W_sel.
void write_density_report(const ThinningResult& result, const GridSpec& grid,
                          const std::string& path);

}  // namespace enda
