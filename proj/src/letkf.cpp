#include "letkf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "spatial_index.hpp"

namespace enda {

void DaConfig::validate() const {
  if (ensemble_size < 2)
    throw std::invalid_argument("DaConfig: ensemble_size must be >= 2");
  if (rho_h_km <= 0.0 || rho_v_logp <= 0.0)
    throw std::invalid_argument("DaConfig: localization radii must be positive");
  if (alpha < 0.0)
    throw std::invalid_argument("DaConfig: alpha must be non-negative");
  if (relaxation == Relaxation::RTPP && alpha > 1.0)
    throw std::invalid_argument("DaConfig: RTPP alpha must be in [0, 1]");
  if (gross_error_factor <= 0.0)
    throw std::invalid_argument("DaConfig: gross_error_factor must be positive");
}

Relaxation parse_relaxation(const std::string& s) {
  if (s == "none") return Relaxation::None;
  if (s == "rtps") return Relaxation::RTPS;
  if (s == "rtpp") return Relaxation::RTPP;
  throw std::invalid_argument("unknown relaxation method: " + s);
}

const char* relaxation_name(Relaxation r) {
  switch (r) {
    case Relaxation::None: return "none";
    case Relaxation::RTPS: return "rtps";
    case Relaxation::RTPP: return "rtpp";
  }
  return "?";
}

double localization_weight(double d_h_km, double d_v_logp, double rho_h_km,
                           double rho_v_logp) {
  return taper_weight(d_h_km, d_v_logp, rho_h_km, rho_v_logp);
}

bool gross_error_check(double departure, double error_std, double factor) {
  return std::abs(departure) <= factor * error_std;
}

void write_innovation_records(const std::vector<InnovationRecord>& records,
                              std::int64_t cycle, const std::string& path,
                              bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write innovations: " + path);
  if (!append)
    out << "cycle,obs_index,var,lat_deg,lon_deg,level_hpa,background_equiv,"
           "departure,accepted\n";
  for (const auto& r : records)
    out << cycle << ',' << r.obs_index << ',' << obs_var_name(r.variable)
        << ',' << r.lat_deg << ',' << r.lon_deg << ',' << r.level_hpa << ','
        << r.background_equiv << ',' << r.departure << ','
        << (r.accepted ? 1 : 0) << '\n';
}

ObsSpaceEval evaluate_obs(const EnsembleState& background,
                          const std::vector<Observation>& obs) {
  const auto l = static_cast<Eigen::Index>(obs.size());
  const auto k = static_cast<Eigen::Index>(background.ensemble_size());
  ObsSpaceEval eval;
  eval.member_equiv.resize(l, k);
  eval.clamped.assign(obs.size(), 0);
  for (Eigen::Index j = 0; j < l; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto r =
          observe(background.layout, background.members.col(i),
                  obs[static_cast<std::size_t>(j)].position,
                  obs[static_cast<std::size_t>(j)].variable);
      eval.member_equiv(j, i) = r.value;
      if (r.clamped) eval.clamped[static_cast<std::size_t>(j)] = 1;
    }
  }
  eval.mean_equiv = eval.member_equiv.rowwise().mean();
  return eval;
}

std::vector<InnovationRecord> gross_error_filter(
    const std::vector<Observation>& obs, const ObsSpaceEval& eval,
    double factor, std::vector<std::size_t>& accepted_indices) {
  std::vector<InnovationRecord> records;
  records.reserve(obs.size());
  accepted_indices.clear();
  for (std::size_t j = 0; j < obs.size(); ++j) {
    const auto& o = obs[j];
    if (!o.error_std || *o.error_std <= 0.0)
      throw std::invalid_argument("gross_error_filter: obs without error_std");
    InnovationRecord rec;
    rec.obs_index = j;
    rec.variable = o.variable;
    rec.lat_deg = o.position.lat_deg;
    rec.lon_deg = o.position.lon_deg;
    rec.level_hpa = o.position.pressure_hpa.value_or(0.0);
    rec.background_equiv = eval.mean_equiv[static_cast<Eigen::Index>(j)];
    rec.departure = o.value - rec.background_equiv;
    rec.accepted = gross_error_check(rec.departure, *o.error_std, factor);
    if (rec.accepted) accepted_indices.push_back(j);
    records.push_back(rec);
  }
  return records;
}

LetkfSolution letkf_solve(const Eigen::MatrixXd& obs_perts,
                          const Eigen::VectorXd& innovation,
                          const Eigen::VectorXd& obs_err_var,
                          const Eigen::VectorXd& loc_weight) {
  const Eigen::Index k = obs_perts.cols();
  const Eigen::Index l = obs_perts.rows();
  LetkfSolution sol;
  if (l == 0) {
    sol.mean_weights = Eigen::VectorXd::Zero(k);
    sol.transform = Eigen::MatrixXd::Identity(k, k);
    return sol;
  }
  // C = Yb' R~^{-1}, with the localized inverse variance w_j / r_j.
  Eigen::VectorXd rinv(l);
  for (Eigen::Index j = 0; j < l; ++j)
    rinv[j] = loc_weight[j] / obs_err_var[j];
  const Eigen::MatrixXd c = obs_perts.transpose() * rinv.asDiagonal();
  Eigen::MatrixXd a = c * obs_perts;
  a.diagonal().array() += static_cast<double>(k - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  Eigen::VectorXd lambda = eig.eigenvalues();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const double floor = 1e-12 * lambda.maxCoeff();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (lambda[i] < floor) {
      lambda[i] = floor;
      ++sol.clamped_eigenvalues;
    }
  }
  const Eigen::MatrixXd p_tilde =
      v * lambda.cwiseInverse().asDiagonal() * v.transpose();
  sol.mean_weights = p_tilde * (c * innovation);
  sol.transform = std::sqrt(static_cast<double>(k - 1)) * v *
                  lambda.cwiseSqrt().cwiseInverse().asDiagonal() *
                  v.transpose();
  return sol;
}

namespace {

// Applies one local solution to the given state rows.
void apply_solution(const Eigen::MatrixXd& background,
                    Eigen::MatrixXd& analysis, const LetkfSolution& sol,
                    const std::vector<std::size_t>& rows) {
  const Eigen::Index k = background.cols();
  // M(i, j) = wbar_i + W_ij
  Eigen::MatrixXd m = sol.transform;
  m.colwise() += sol.mean_weights;
  for (std::size_t r : rows) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double mean = background.row(ri).mean();
    Eigen::RowVectorXd pert =
        background.row(ri) - Eigen::RowVectorXd::Constant(k, mean);
    analysis.row(ri) = Eigen::RowVectorXd::Constant(k, mean) + pert * m;
  }
}

}  // namespace

EnsembleState letkf_analysis(const EnsembleState& background,
                             const std::vector<Observation>& obs,
                             const DaConfig& cfg, AnalysisDiagnostics* diag) {
  cfg.validate();
  const auto& layout = background.layout;
  const auto& grid = layout.grid;
  EnsembleState analysis = background;
  AnalysisDiagnostics local_diag;

  if (obs.empty()) {
    if (diag) *diag = local_diag;
    return analysis;
  }

  const auto eval = evaluate_obs(background, obs);
  const auto l = static_cast<Eigen::Index>(obs.size());
  const Eigen::MatrixXd obs_perts =
      eval.member_equiv.colwise() - eval.mean_equiv;
  Eigen::VectorXd innovation(l), err_var(l), obs_lnp(l);
  std::vector<GeoPoint> positions(obs.size());
  for (Eigen::Index j = 0; j < l; ++j) {
    const auto& o = obs[static_cast<std::size_t>(j)];
    if (!o.error_std || *o.error_std <= 0.0)
      throw std::invalid_argument("letkf_analysis: obs without error_std");
    innovation[j] = o.value - eval.mean_equiv[j];
    err_var[j] = (*o.error_std) * (*o.error_std);
    obs_lnp[j] = std::log(
        o.position.pressure_hpa.value_or(grid.levels_hpa.front()));
    positions[static_cast<std::size_t>(j)] = o.position;
  }

  const double cutoff_h = kCutoffFactor * cfg.rho_h_km;
  ObsSpatialIndex index(positions, cutoff_h);

  std::vector<std::size_t> upper_vars, surface_vars;
  for (std::size_t v = 0; v < layout.vars.size(); ++v)
    (layout.vars[v].n_levels > 1 ? upper_vars : surface_vars).push_back(v);
  const std::size_t ps_var = layout.find_var(ObsVar::PS);
  const Eigen::VectorXd bg_mean = background.mean();

  const auto n_cols = static_cast<long>(grid.n_columns());
  long clamped_total = 0;
  long points_with_obs = 0;
  long points_total = 0;

#pragma omp parallel for schedule(dynamic, 8) \
    reduction(+ : clamped_total, points_with_obs, points_total)
  for (long col = 0; col < n_cols; ++col) {
    const std::size_t j_lat = static_cast<std::size_t>(col) / grid.n_lon;
    const std::size_t i_lon = static_cast<std::size_t>(col) % grid.n_lon;
    const GeoPoint center{grid.lat_deg[j_lat], grid.lon_deg[i_lon],
                          std::nullopt};
    const auto neighbors = index.query(center);

    std::vector<Eigen::Index> local;
    std::vector<double> weights;
    auto gather = [&](double grid_lnp, bool vertical) {
      local.clear();
      weights.clear();
      for (const auto& nb : neighbors) {
        const auto j = static_cast<Eigen::Index>(nb.idx);
        const double d_v = vertical ? std::abs(obs_lnp[j] - grid_lnp) : 0.0;
        const double w = localization_weight(nb.d_km, d_v, cfg.rho_h_km,
                                             cfg.rho_v_logp);
        if (w > 0.0) {
          local.push_back(j);
          weights.push_back(w);
        }
      }
    };
    auto solve_and_apply = [&](const std::vector<std::size_t>& rows) {
      const auto ll = static_cast<Eigen::Index>(local.size());
      Eigen::MatrixXd yp(ll, background.members.cols());
      Eigen::VectorXd d(ll), r(ll), w(ll);
      for (Eigen::Index j = 0; j < ll; ++j) {
        yp.row(j) = obs_perts.row(local[static_cast<std::size_t>(j)]);
        d[j] = innovation[local[static_cast<std::size_t>(j)]];
        r[j] = err_var[local[static_cast<std::size_t>(j)]];
        w[j] = weights[static_cast<std::size_t>(j)];
      }
      const auto sol = letkf_solve(yp, d, r, w);
      clamped_total += sol.clamped_eigenvalues;
      apply_solution(background.members, analysis.members, sol, rows);
    };

    // Upper-air pass: one local analysis per model level.
    for (std::size_t lev = 0; lev < grid.n_levels() && !upper_vars.empty();
         ++lev) {
      ++points_total;
      gather(std::log(grid.levels_hpa[lev]), true);
      if (local.empty()) continue;
      ++points_with_obs;
      std::vector<std::size_t> rows;
      for (std::size_t v : upper_vars)
        rows.push_back(layout.index(v, lev, j_lat, i_lon));
      solve_and_apply(rows);
    }

    // Surface pass: vertical coordinate from the background mean
    // surface pressure when available.
    if (!surface_vars.empty()) {
      ++points_total;
      bool vertical = false;
      double grid_lnp = 0.0;
      if (ps_var != StateLayout::npos) {
        const double ps =
            bg_mean[static_cast<Eigen::Index>(layout.index(ps_var, 0, j_lat, i_lon))];
        if (ps > 0.0) {
          grid_lnp = std::log(ps);
          vertical = true;
        }
      }
      gather(grid_lnp, vertical);
      if (!local.empty()) {
        ++points_with_obs;
        std::vector<std::size_t> rows;
        for (std::size_t v : surface_vars)
          rows.push_back(layout.index(v, 0, j_lat, i_lon));
        solve_and_apply(rows);
      }
    }
  }

  local_diag.clamped_eigenvalues = clamped_total;
  local_diag.points_with_obs = static_cast<std::size_t>(points_with_obs);
  local_diag.points_total = static_cast<std::size_t>(points_total);
  if (diag) *diag = local_diag;
  return analysis;
}

Eigen::MatrixXd letkf_analysis_ring(const Eigen::MatrixXd& background,
                                    const std::vector<RingObs>& obs,
                                    const DaConfig& cfg,
                                    AnalysisDiagnostics* diag) {
  const Eigen::Index n = background.rows();
  const Eigen::Index k = background.cols();
  Eigen::MatrixXd analysis = background;
  AnalysisDiagnostics local_diag;
  local_diag.points_total = static_cast<std::size_t>(n);
  if (obs.empty()) {
    if (diag) *diag = local_diag;
    return analysis;
  }

  const auto l = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd member_equiv(l, k);
  Eigen::VectorXd values(l), err_var(l);
  for (Eigen::Index j = 0; j < l; ++j) {
    const auto& o = obs[static_cast<std::size_t>(j)];
    if (o.index >= static_cast<std::size_t>(n))
      throw std::invalid_argument("letkf_analysis_ring: obs index out of range");
    member_equiv.row(j) = background.row(static_cast<Eigen::Index>(o.index));
    values[j] = o.value;
    err_var[j] = o.error_std * o.error_std;
  }
  const Eigen::VectorXd mean_equiv = member_equiv.rowwise().mean();
  const Eigen::MatrixXd obs_perts = member_equiv.colwise() - mean_equiv;
  const Eigen::VectorXd innovation = values - mean_equiv;

  const double rho = cfg.ring_rho_intervals;
  for (Eigen::Index g = 0; g < n; ++g) {
    std::vector<Eigen::Index> local;
    std::vector<double> weights;
    for (Eigen::Index j = 0; j < l; ++j) {
      double w = 1.0;
      if (rho > 0.0) {
        const auto oi = static_cast<Eigen::Index>(obs[static_cast<std::size_t>(j)].index);
        const double raw = std::abs(static_cast<double>(g - oi));
        const double d = std::min(raw, static_cast<double>(n) - raw);
        w = taper_weight(d, 0.0, rho, 1.0);
      }
      if (w > 0.0) {
        local.push_back(j);
        weights.push_back(w);
      }
    }
    if (local.empty()) continue;
    ++local_diag.points_with_obs;
    const auto ll = static_cast<Eigen::Index>(local.size());
    Eigen::MatrixXd yp(ll, k);
    Eigen::VectorXd d(ll), r(ll), w(ll);
    for (Eigen::Index j = 0; j < ll; ++j) {
      yp.row(j) = obs_perts.row(local[static_cast<std::size_t>(j)]);
      d[j] = innovation[local[static_cast<std::size_t>(j)]];
      r[j] = err_var[local[static_cast<std::size_t>(j)]];
      w[j] = weights[static_cast<std::size_t>(j)];
    }
    const auto sol = letkf_solve(yp, d, r, w);
    local_diag.clamped_eigenvalues += sol.clamped_eigenvalues;
    apply_solution(background, analysis, sol, {static_cast<std::size_t>(g)});
  }
  if (diag) *diag = local_diag;
  return analysis;
}

Eigen::MatrixXd relax_rtps(const Eigen::MatrixXd& analysis,
                           const Eigen::MatrixXd& background, double alpha,
                           RelaxationStats* stats) {
  if (analysis.rows() != background.rows() ||
      analysis.cols() != background.cols())
    throw std::invalid_argument("relax_rtps: shape mismatch");
  const Eigen::Index k = analysis.cols();
  const double norm = 1.0 / static_cast<double>(k - 1);
  Eigen::MatrixXd out = analysis;
  RelaxationStats local;
  for (Eigen::Index r = 0; r < analysis.rows(); ++r) {
    const double mean_a = analysis.row(r).mean();
    const double mean_b = background.row(r).mean();
    const double var_a =
        (analysis.row(r).array() - mean_a).square().sum() * norm;
    const double var_b =
        (background.row(r).array() - mean_b).square().sum() * norm;
    const double sigma_a = std::sqrt(var_a);
    if (sigma_a <= 0.0) {
      ++local.zero_spread_points;
      continue;
    }
    const double sigma_b = std::sqrt(var_b);
    const double scale = alpha * (sigma_b - sigma_a) / sigma_a + 1.0;
    out.row(r) = (analysis.row(r).array() - mean_a) * scale + mean_a;
  }
  if (stats) *stats = local;
  return out;
}

Eigen::MatrixXd relax_rtpp(const Eigen::MatrixXd& analysis,
                           const Eigen::MatrixXd& background, double alpha) {
  if (analysis.rows() != background.rows() ||
      analysis.cols() != background.cols())
    throw std::invalid_argument("relax_rtpp: shape mismatch");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("relax_rtpp: alpha outside [0, 1]");
  const Eigen::VectorXd mean_a = analysis.rowwise().mean();
  const Eigen::VectorXd mean_b = background.rowwise().mean();
  const Eigen::MatrixXd pert_a = analysis.colwise() - mean_a;
  const Eigen::MatrixXd pert_b = background.colwise() - mean_b;
  return ((1.0 - alpha) * pert_a + alpha * pert_b).colwise() + mean_a;
}

Eigen::MatrixXd apply_relaxation(const Eigen::MatrixXd& analysis,
                                 const Eigen::MatrixXd& background,
                                 const DaConfig& cfg, RelaxationStats* stats) {
  switch (cfg.relaxation) {
    case Relaxation::None: return analysis;
    case Relaxation::RTPS:
      return relax_rtps(analysis, background, cfg.alpha, stats);
    case Relaxation::RTPP:
      return relax_rtpp(analysis, background, cfg.alpha);
  }
  return analysis;
}

}  // namespace enda
