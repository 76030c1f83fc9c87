#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "state.hpp"

namespace enda {

// Area-weighted RMSE: sqrt(sum A_i e_i^2 / sum A_i). Invariant under
// uniform scaling of the areas.
double rmse(const Eigen::Ref<const Eigen::VectorXd>& field,
            const Eigen::Ref<const Eigen::VectorXd>& truth,
            const Eigen::Ref<const Eigen::VectorXd>& area);

// Area-weighted mean of the per-point ensemble sample variance
// (1/(l-1) convention), square-rooted. members is n x k, k >= 2.
double spread(const Eigen::Ref<const Eigen::MatrixXd>& members,
              const Eigen::Ref<const Eigen::VectorXd>& area);

// Literal printed form: variance terms centered on a reference field
// instead of the ensemble mean.
double spread_about(const Eigen::Ref<const Eigen::MatrixXd>& members,
                    const Eigen::Ref<const Eigen::VectorXd>& reference,
                    const Eigen::Ref<const Eigen::VectorXd>& area);

// Latitude-weighted anomaly correlation. Weights are per grid point
// (the row weight L_j replicated along each row). Throws
// std::domain_error when either anomaly field has zero variance.
double acc(const Eigen::Ref<const Eigen::VectorXd>& field,
           const Eigen::Ref<const Eigen::VectorXd>& truth,
           const Eigen::Ref<const Eigen::VectorXd>& climatology,
           const Eigen::Ref<const Eigen::VectorXd>& weight);

// Slice helpers for per-variable, per-level scores on gridded states.
// Extracts the (var, level) lat/lon plane of one state vector.
Eigen::VectorXd extract_slice(const StateLayout& layout,
                              const Eigen::Ref<const Eigen::VectorXd>& state,
                              std::size_t var, std::size_t level);
// Per-cell areas (cell_area of the point's row) for a lat/lon plane.
Eigen::VectorXd plane_areas(const GridSpec& grid);
// Per-cell latitude weights for a lat/lon plane.
Eigen::VectorXd plane_lat_weights(const GridSpec& grid);

struct VariableScore {
  ObsVar var = ObsVar::T;
  double level_hpa = 0.0;  // 0 for surface fields
  double rmse = 0.0;
  double spread = 0.0;
};

// Mean-vs-truth RMSE and ensemble spread per variable and level.
std::vector<VariableScore> score_ensemble(
    const EnsembleState& ensemble,
    const Eigen::Ref<const Eigen::VectorXd>& truth);

}  // namespace enda
