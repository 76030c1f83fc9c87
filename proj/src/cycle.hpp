#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "letkf.hpp"
#include "models.hpp"
#include "state.hpp"
#include "thinning.hpp"

namespace enda {

enum class ModelKind { Lorenz96, Surrogate };
enum class ObsSource { Synth, File, None };
enum class InitMode { Perturb, Lagged, Resume };

struct ExperimentConfig {
  ModelKind model = ModelKind::Lorenz96;

  Lorenz96Config lorenz;
  std::size_t ring_obs_every = 1;  // observe every m-th ring variable
  double ring_obs_error = 1.0;

  std::vector<ObsVar> surrogate_vars = {ObsVar::T, ObsVar::PS};
  std::size_t grid_n_lon = 64;
  std::size_t grid_n_lat = 32;
  std::vector<double> grid_levels = {925, 850, 700, 600, 500, 250, 50};
  double speed_base = 0.6;
  double speed_per_level = 0.15;
  double surface_speed = 0.4;
  double surrogate_relax_rate = 0.004;
  double surrogate_diffusion = 0.05;
  std::map<ObsVar, std::size_t> network_counts;
  std::map<ObsVar, double> obs_error;  // synth network errors
  std::uint64_t network_seed = 7;

  DaConfig da;
  ThinningConfig thinning;
  bool thinning_enabled = true;  // gridded experiments only

  ObsSource obs_source = ObsSource::Synth;
  std::string obs_file;
  std::int64_t window_half_width = 1800;

  InitMode init_mode = InitMode::Perturb;
  double init_magnitude = 1.0;
  std::uint64_t init_seed = 1;
  std::size_t lagged_stride = 4;
  std::string resume_dir;
  std::size_t resume_cycle = 0;

  std::uint64_t truth_seed = 42;
  std::size_t truth_burnin = 1440;    // ring spin-onto-attractor steps
  double truth_anomaly = 3.0;         // surrogate initial anomaly scale

  std::size_t n_cycles = 100;
  std::size_t spinup_cycles = 0;  // 0 -> n_cycles / 24
  std::int64_t cycle_seconds = 21600;
  std::int64_t start_time = 0;
  std::uint64_t run_seed = 0;

  std::string output_dir;
  std::size_t snapshot_every = 0;  // 0 -> final state only
  bool archive_analysis = false;   // every-cycle archive for forecasts
  bool emit_rmse_raster = false;
  bool metrics_enabled = true;

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  void validate() const;
  std::size_t effective_spinup() const {
    return spinup_cycles > 0 ? spinup_cycles : std::max<std::size_t>(1, n_cycles / 24);
  }
};

struct CycleReportRow {
  std::size_t cycle = 0;
  std::int64_t time = 0;
  std::string var;
  double level_hpa = 0.0;
  double rmse_bg = 0.0;
  double spread_bg = 0.0;
  double rmse_an = 0.0;
  double spread_an = 0.0;
  std::size_t obs_raw = 0;
  std::size_t obs_windowed = 0;
  std::size_t obs_thinned = 0;
  std::size_t obs_rejected = 0;
};

struct CycleResult {
  std::vector<CycleReportRow> rows;
  bool aborted = false;
  std::size_t aborted_cycle = 0;
};

CycleResult run_cycle_experiment(const ExperimentConfig& cfg);

struct InitSpec {
  InitMode mode = InitMode::Perturb;
  double magnitude = 1.0;
  std::uint64_t seed = 1;
  std::size_t stride = 4;
};

// nature_tail is an ascending-time window of nature states whose last
// element is the experiment start. Lagged mode takes member m from
// stride*m steps before the start; perturb mode adds Gaussian noise to
// the start state.
Eigen::MatrixXd make_initial_ensemble_ring(
    const std::vector<Eigen::VectorXd>& nature_tail, std::size_t k,
    const InitSpec& spec);

// Gridded variant; perturbations are smooth fields scaled per variable.
Eigen::MatrixXd make_initial_ensemble_grid(
    const StateLayout& layout, const std::vector<Eigen::VectorXd>& nature_tail,
    std::size_t k, const InitSpec& spec);

struct ForecastSpec {
  std::string archive_dir;
  std::size_t lead_max = 8;
  std::size_t first_cycle = 0;
  std::size_t last_cycle = 0;
  std::size_t stride = 1;
  std::string output_csv;

  static ForecastSpec from_kv(const KeyValueConfig& kv);
};

// Writes the free nature trajectory (truth_c0 .. truth_c{n_cycles}) to
// output_dir using the configured model and truth seed.
void run_nature_experiment(const ExperimentConfig& cfg);

struct SynthObsSpec {
  std::string truth_dir;
  std::size_t first_cycle = 1;
  std::size_t last_cycle = 1;
  std::string output_path;

  static SynthObsSpec from_kv(const KeyValueConfig& kv);
};

// Samples the configured observation network against archived truth
// snapshots and writes one exchange-format CSV. Gridded models only.
void run_synth_obs_experiment(const ExperimentConfig& cfg,
                              const SynthObsSpec& spec);

struct LeadScore {
  std::size_t lead = 0;
  std::string var;
  double level_hpa = 0.0;
  double rmse = 0.0;
  double spread = 0.0;
};

// Free-runs archived analysis ensembles to each lead and averages the
// verification scores over initial times.
std::vector<LeadScore> run_forecast_experiment(const ExperimentConfig& cfg,
                                               const ForecastSpec& spec);

// Per-variable typical magnitudes used to scale perturbations and
// climatological anomalies.
double variable_scale(ObsVar var);

// Builds the surrogate model described by the config (with the default
// climatology).
SurrogateModel make_surrogate_model(const ExperimentConfig& cfg);
StateLayout make_surrogate_layout(const ExperimentConfig& cfg);

}  // namespace enda
