#include "metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace enda {

double rmse(const Eigen::Ref<const Eigen::VectorXd>& field,
            const Eigen::Ref<const Eigen::VectorXd>& truth,
            const Eigen::Ref<const Eigen::VectorXd>& area) {
  if (field.size() != truth.size() || field.size() != area.size())
    throw std::invalid_argument("rmse: shape mismatch");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    const double e = field[i] - truth[i];
    num += area[i] * e * e;
    den += area[i];
  }
  return std::sqrt(num / den);
}

double spread(const Eigen::Ref<const Eigen::MatrixXd>& members,
              const Eigen::Ref<const Eigen::VectorXd>& area) {
  const Eigen::Index k = members.cols();
  if (k < 2) throw std::domain_error("spread: need at least 2 members");
  if (members.rows() != area.size())
    throw std::invalid_argument("spread: shape mismatch");
  const double norm = 1.0 / static_cast<double>(k - 1);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < members.rows(); ++i) {
    const double mean = members.row(i).mean();
    const double var = (members.row(i).array() - mean).square().sum() * norm;
    num += area[i] * var;
    den += area[i];
  }
  return std::sqrt(num / den);
}

double spread_about(const Eigen::Ref<const Eigen::MatrixXd>& members,
                    const Eigen::Ref<const Eigen::VectorXd>& reference,
                    const Eigen::Ref<const Eigen::VectorXd>& area) {
  const Eigen::Index k = members.cols();
  if (k < 2) throw std::domain_error("spread_about: need at least 2 members");
  if (members.rows() != area.size() || members.rows() != reference.size())
    throw std::invalid_argument("spread_about: shape mismatch");
  const double norm = 1.0 / static_cast<double>(k - 1);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < members.rows(); ++i) {
    const double var =
        (members.row(i).array() - reference[i]).square().sum() * norm;
    num += area[i] * var;
    den += area[i];
  }
  return std::sqrt(num / den);
}

double acc(const Eigen::Ref<const Eigen::VectorXd>& field,
           const Eigen::Ref<const Eigen::VectorXd>& truth,
           const Eigen::Ref<const Eigen::VectorXd>& climatology,
           const Eigen::Ref<const Eigen::VectorXd>& weight) {
  if (field.size() != truth.size() || field.size() != climatology.size() ||
      field.size() != weight.size())
    throw std::invalid_argument("acc: shape mismatch");
  double cross = 0.0, var_f = 0.0, var_t = 0.0;
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    const double af = field[i] - climatology[i];
    const double at = truth[i] - climatology[i];
    cross += weight[i] * af * at;
    var_f += weight[i] * af * af;
    var_t += weight[i] * at * at;
  }
  if (var_f <= 0.0 || var_t <= 0.0)
    throw std::domain_error("acc: zero anomaly variance");
  return cross / (std::sqrt(var_f) * std::sqrt(var_t));
}

Eigen::VectorXd extract_slice(const StateLayout& layout,
                              const Eigen::Ref<const Eigen::VectorXd>& state,
                              std::size_t var, std::size_t level) {
  const std::size_t n = layout.grid.n_columns();
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  const std::size_t base = layout.index(var, level, 0, 0);
  for (std::size_t i = 0; i < n; ++i)
    out[static_cast<Eigen::Index>(i)] =
        state[static_cast<Eigen::Index>(base + i)];
  return out;
}

Eigen::VectorXd plane_areas(const GridSpec& grid) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.n_columns()));
  for (std::size_t j = 0; j < grid.n_lat; ++j)
    for (std::size_t i = 0; i < grid.n_lon; ++i)
      out[static_cast<Eigen::Index>(grid.column(j, i))] = grid.cell_area[j];
  return out;
}

Eigen::VectorXd plane_lat_weights(const GridSpec& grid) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.n_columns()));
  for (std::size_t j = 0; j < grid.n_lat; ++j)
    for (std::size_t i = 0; i < grid.n_lon; ++i)
      out[static_cast<Eigen::Index>(grid.column(j, i))] = grid.lat_weight[j];
  return out;
}

std::vector<VariableScore> score_ensemble(
    const EnsembleState& ensemble,
    const Eigen::Ref<const Eigen::VectorXd>& truth) {
  const auto& layout = ensemble.layout;
  const Eigen::VectorXd mean = ensemble.mean();
  const Eigen::VectorXd areas = plane_areas(layout.grid);
  const std::size_t n_cols = layout.grid.n_columns();
  std::vector<VariableScore> scores;
  for (std::size_t v = 0; v < layout.vars.size(); ++v) {
    for (std::size_t lev = 0; lev < layout.vars[v].n_levels; ++lev) {
      VariableScore s;
      s.var = layout.vars[v].var;
      s.level_hpa =
          layout.vars[v].n_levels > 1 ? layout.grid.levels_hpa[lev] : 0.0;
      const Eigen::VectorXd m = extract_slice(layout, mean, v, lev);
      const Eigen::VectorXd t = extract_slice(layout, truth, v, lev);
      s.rmse = rmse(m, t, areas);
      const std::size_t base = layout.index(v, lev, 0, 0);
      s.spread = spread(
          ensemble.members.middleRows(static_cast<Eigen::Index>(base),
                                      static_cast<Eigen::Index>(n_cols)),
          areas);
      scores.push_back(s);
    }
  }
  return scores;
}

}  // namespace enda
