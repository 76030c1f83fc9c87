#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "obs.hpp"
#include "state.hpp"

namespace enda {

enum class Relaxation { None, RTPS, RTPP };

struct DaConfig {
  std::size_t ensemble_size = 20;
  double rho_h_km = 600.0;
  double rho_v_logp = 0.1;
  Relaxation relaxation = Relaxation::RTPP;
  double alpha = 0.9;
  double gross_error_factor = 10.0;
  // Ring (Lorenz-96) geometry: localization radius expressed in grid
  // intervals; cyclic index distance plays the role of d_h.
  double ring_rho_intervals = 4.0;

  void validate() const;  // throws std::invalid_argument
};

Relaxation parse_relaxation(const std::string& s);  // none|rtps|rtpp
const char* relaxation_name(Relaxation r);

// Same taper as the thinning distance weight, with the rho parameters.
double localization_weight(double d_h_km, double d_v_logp, double rho_h_km,
                           double rho_v_logp);

// Accept iff |departure| <= factor * error_std (boundary retained).
bool gross_error_check(double departure, double error_std, double factor);

struct InnovationRecord {
  std::size_t obs_index = 0;  // index within the checked batch
  ObsVar variable = ObsVar::T;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double level_hpa = 0.0;
  double background_equiv = 0.0;
  double departure = 0.0;
  bool accepted = true;
};

void write_innovation_records(const std::vector<InnovationRecord>& records,
                              std::int64_t cycle, const std::string& path,
                              bool append);

// Background ensemble mapped into observation space.
struct ObsSpaceEval {
  Eigen::MatrixXd member_equiv;  // l x k
  Eigen::VectorXd mean_equiv;    // l
  std::vector<char> clamped;     // per obs, vertical clamping flag
};

ObsSpaceEval evaluate_obs(const EnsembleState& background,
                          const std::vector<Observation>& obs);

// Applies the gross error check against the background-mean equivalents.
// Returns one record per obs; `accepted_indices` lists survivors.
std::vector<InnovationRecord> gross_error_filter(
    const std::vector<Observation>& obs, const ObsSpaceEval& eval,
    double factor, std::vector<std::size_t>& accepted_indices);

// Ensemble-space solution of the local analysis.
struct LetkfSolution {
  Eigen::VectorXd mean_weights;  // k
  Eigen::MatrixXd transform;     // k x k, symmetric square root
  int clamped_eigenvalues = 0;
};

// obs_perts: l x k background perturbations in obs space; innovation:
// y - mean_equiv; obs_err_var and loc_weight per obs. R-localization
// scales each inverse error variance by its localization weight.
LetkfSolution letkf_solve(const Eigen::MatrixXd& obs_perts,
                          const Eigen::VectorXd& innovation,
                          const Eigen::VectorXd& obs_err_var,
                          const Eigen::VectorXd& loc_weight);

struct AnalysisDiagnostics {
  std::size_t points_with_obs = 0;
  std::size_t points_total = 0;
  long clamped_eigenvalues = 0;
};

// Per-grid-point LETKF over a gridded ensemble. Observations must be
// preprocessed, thinned and QC-passed. Points with no local obs keep
// the background.
EnsembleState letkf_analysis(const EnsembleState& background,
                             const std::vector<Observation>& obs,
                             const DaConfig& cfg,
                             AnalysisDiagnostics* diag = nullptr);

// Direct-component observations on a cyclic ring state.
struct RingObs {
  std::size_t index = 0;
  double value = 0.0;
  double error_std = 1.0;
};

Eigen::MatrixXd letkf_analysis_ring(const Eigen::MatrixXd& background,
                                    const std::vector<RingObs>& obs,
                                    const DaConfig& cfg,
                                    AnalysisDiagnostics* diag = nullptr);

struct RelaxationStats {
  std::size_t zero_spread_points = 0;
};

// RTPS: scales analysis perturbations so the posterior std becomes
// (1 - alpha) sigma_a + alpha sigma_b; the mean is untouched.
Eigen::MatrixXd relax_rtps(const Eigen::MatrixXd& analysis,
                           const Eigen::MatrixXd& background, double alpha,
                           RelaxationStats* stats = nullptr);

// RTPP: blends analysis and background perturbations memberwise.
Eigen::MatrixXd relax_rtpp(const Eigen::MatrixXd& analysis,
                           const Eigen::MatrixXd& background, double alpha);

Eigen::MatrixXd apply_relaxation(const Eigen::MatrixXd& analysis,
                                 const Eigen::MatrixXd& background,
                                 const DaConfig& cfg,
                                 RelaxationStats* stats = nullptr);

}  // namespace enda
