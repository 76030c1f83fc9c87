#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cycle.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace enda;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_ring(const std::string& out_dir) {
  auto kv = KeyValueConfig::parse_string(
      "model.type = lorenz96\n"
      "da.ensemble_size = 8\n"
      "truth.burnin = 200\n"
      "run.n_cycles = 10\n"
      "run.seed = 5\n");
  auto cfg = ExperimentConfig::from_kv(kv);
  cfg.output_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("variable scales") {
  CHECK(variable_scale(ObsVar::T) == 1.0);
  CHECK(variable_scale(ObsVar::U) == 1.0);
  CHECK(variable_scale(ObsVar::Q) == 1e-3);
  CHECK(variable_scale(ObsVar::PS) == 1.0);
}

TEST_CASE("config parsing and defaults") {
  auto kv = KeyValueConfig::parse_string(
      "model.type = surrogate\n"
      "model.vars = T,Q,PS\n"
      "model.levels = 925, 500, 100\n"
      "da.relaxation = rtps\n"
      "obs.network.count.T = 50\n"
      "output.dir = /tmp/x\n");
  const auto cfg = ExperimentConfig::from_kv(kv);
  CHECK(cfg.model == ModelKind::Surrogate);
  REQUIRE(cfg.surrogate_vars.size() == 3);
  CHECK(cfg.surrogate_vars[1] == ObsVar::Q);
  CHECK(cfg.grid_levels == std::vector<double>{925, 500, 100});
  CHECK(cfg.da.relaxation == Relaxation::RTPS);
  CHECK(cfg.da.alpha == 1.2);  // RTPS default
  CHECK(cfg.network_counts.at(ObsVar::T) == 50);
  CHECK(cfg.obs_error.at(ObsVar::Q) == 0.01);
  CHECK_NOTHROW(kv.require_fully_consumed());
  CHECK_NOTHROW(cfg.validate());

  auto kv2 = KeyValueConfig::parse_string("model.type = lorenz96\n");
  const auto ring = ExperimentConfig::from_kv(kv2);
  CHECK(ring.da.relaxation == Relaxation::RTPP);
  CHECK(ring.da.alpha == 0.9);  // RTPP default
  CHECK(ring.da.rho_h_km == 600.0);
  CHECK(ring.thinning.r_h_km == 500.0);
  CHECK(ring.lorenz.n == 40);

  auto bad = KeyValueConfig::parse_string("model.type = spectral\n");
  CHECK_THROWS_AS(ExperimentConfig::from_kv(bad), std::runtime_error);
  auto stray = KeyValueConfig::parse_string(
      "model.type = lorenz96\nmodle.n = 40\n");
  (void)ExperimentConfig::from_kv(stray);
  CHECK_THROWS_WITH_AS(stray.require_fully_consumed(),
                       doctest::Contains("modle.n"), std::runtime_error);
}

TEST_CASE("experiment validation") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // no output dir
  cfg.output_dir = "/tmp/enda_v";
  CHECK_NOTHROW(cfg.validate());
  cfg.init_mode = InitMode::Resume;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.init_mode = InitMode::Perturb;
  cfg.obs_source = ObsSource::File;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.obs_source = ObsSource::Synth;
  CHECK(cfg.effective_spinup() == std::max<std::size_t>(1, cfg.n_cycles / 24));
  cfg.spinup_cycles = 7;
  CHECK(cfg.effective_spinup() == 7);
}

TEST_CASE("initial ensembles: perturb and lagged") {
  std::vector<Eigen::VectorXd> tail;
  for (int s = 0; s < 9; ++s)
    tail.push_back(Eigen::VectorXd::Constant(4, double(s)));

  InitSpec lag{InitMode::Lagged, 1.0, 1, 2};
  const Eigen::MatrixXd lagged = make_initial_ensemble_ring(tail, 4, lag);
  // Member m holds the state stride*m steps before the start (value 8).
  CHECK(lagged(0, 0) == 8.0);
  CHECK(lagged(0, 1) == 6.0);
  CHECK(lagged(0, 3) == 2.0);
  lag.stride = 5;
  CHECK_THROWS_AS(make_initial_ensemble_ring(tail, 4, lag), std::runtime_error);

  InitSpec pert{InitMode::Perturb, 0.5, 3, 0};
  const Eigen::MatrixXd p = make_initial_ensemble_ring(tail, 6, pert);
  CHECK(p.cols() == 6);
  CHECK((p.colwise() - tail.back()).norm() > 0.0);
  const Eigen::MatrixXd p2 = make_initial_ensemble_ring(tail, 6, pert);
  CHECK((p - p2).norm() == 0.0);  // seeded
}

TEST_CASE("ring cycling beats the observation error and writes outputs") {
  const std::string dir = fresh_dir("enda_ring_run");
  auto cfg = small_ring(dir);
  cfg.n_cycles = 60;
  const auto result = run_cycle_experiment(cfg);
  CHECK_FALSE(result.aborted);
  REQUIRE(result.rows.size() == 60);
  // After spinup the analysis should track the truth well below the
  // sigma=1 observation error.
  double tail_rmse = 0;
  for (std::size_t c = 30; c < 60; ++c) tail_rmse += result.rows[c].rmse_an;
  tail_rmse /= 30;
  CHECK(tail_rmse < 1.0);
  // On average the analysis fits the truth better than the background.
  double bg = 0, an = 0;
  for (std::size_t c = 30; c < 60; ++c) {
    bg += result.rows[c].rmse_bg;
    an += result.rows[c].rmse_an;
  }
  CHECK(an < bg);
  CHECK(result.rows[0].obs_raw == 40);
  CHECK(result.rows[0].obs_rejected <= 40);

  CHECK(fs::exists(dir + "/reports.csv"));
  CHECK(fs::exists(dir + "/innovations.csv"));
  CHECK(fs::exists(dir + "/state/truth_c60.txt"));
  CHECK(fs::exists(dir + "/state/mem_c60_m7.txt"));
  const Eigen::VectorXd truth = read_ring_state(dir + "/state/truth_c60.txt");
  CHECK(truth.size() == 40);
  fs::remove_all(dir);
}

TEST_CASE("identical configs give byte-identical reports") {
  const std::string dir_a = fresh_dir("enda_det_a");
  const std::string dir_b = fresh_dir("enda_det_b");
  auto a = small_ring(dir_a);
  auto b = small_ring(dir_b);
  run_cycle_experiment(a);
  run_cycle_experiment(b);
  CHECK(slurp(dir_a + "/reports.csv") == slurp(dir_b + "/reports.csv"));
  CHECK(slurp(dir_a + "/innovations.csv") == slurp(dir_b + "/innovations.csv"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const std::string dir_full = fresh_dir("enda_resume_full");
  auto full = small_ring(dir_full);
  full.archive_analysis = true;
  const auto ref = run_cycle_experiment(full);

  const std::string dir_resume = fresh_dir("enda_resume_part");
  auto resumed = small_ring(dir_resume);
  resumed.init_mode = InitMode::Resume;
  resumed.resume_dir = dir_full + "/archive";
  resumed.resume_cycle = 5;
  const auto cont = run_cycle_experiment(resumed);

  REQUIRE(cont.rows.size() == 5);  // cycles 6..10
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& r = cont.rows[i];
    const auto& e = ref.rows[5 + i];
    CHECK(r.cycle == e.cycle);
    CHECK(r.rmse_an == e.rmse_an);
    CHECK(r.spread_an == e.spread_an);
  }
  fs::remove_all(dir_full);
  fs::remove_all(dir_resume);
}

TEST_CASE("model divergence aborts but keeps partial outputs") {
  const std::string dir = fresh_dir("enda_diverge");
  auto cfg = small_ring(dir);
  cfg.lorenz.dt = 2.0;    // wildly unstable step
  cfg.truth_burnin = 1;   // survive initialization, blow up while cycling
  cfg.n_cycles = 50;
  const auto result = run_cycle_experiment(cfg);
  CHECK(result.aborted);
  CHECK(result.aborted_cycle >= 1);
  CHECK(result.aborted_cycle <= 50);
  CHECK(result.rows.size() == result.aborted_cycle - 1);
  CHECK(fs::exists(dir + "/reports.csv"));
  fs::remove_all(dir);
}

TEST_CASE("gridded experiment produces per-variable rows and rasters") {
  const std::string dir = fresh_dir("enda_grid_run");
  auto kv = KeyValueConfig::parse_string(
      "model.type = surrogate\n"
      "model.n_lon = 16\n"
      "model.n_lat = 8\n"
      "model.levels = 925, 500\n"
      "da.ensemble_size = 6\n"
      "obs.network.count.T = 60\n"
      "obs.network.count.PS = 20\n"
      "run.n_cycles = 5\n"
      "output.rmse_raster = true\n"
      "run.spinup_cycles = 2\n");
  auto cfg = ExperimentConfig::from_kv(kv);
  kv.require_fully_consumed();
  cfg.output_dir = dir;
  const auto result = run_cycle_experiment(cfg);
  CHECK_FALSE(result.aborted);
  // 5 cycles x (2 T levels + PS).
  REQUIRE(result.rows.size() == 15);
  CHECK(result.rows[0].var == "T");
  CHECK(result.rows[0].level_hpa == 925.0);
  CHECK(result.rows[1].level_hpa == 500.0);
  CHECK(result.rows[2].var == "PS");
  CHECK(result.rows[2].level_hpa == 0.0);
  CHECK(result.rows[0].obs_raw == 80);
  CHECK(result.rows[0].obs_thinned <= result.rows[0].obs_windowed);
  CHECK(result.rows[0].obs_thinned > 0);

  CHECK(fs::exists(dir + "/rmse_raster.bin"));
  CHECK(fs::exists(dir + "/spread_raster.bin"));
  const auto raster = read_state_file(dir + "/rmse_raster");
  CHECK(raster.state.size() == Eigen::Index(cfg.da.ensemble_size ? 16 * 8 * 3 : 0));
  CHECK(raster.state.minCoeff() >= 0.0);
  CHECK(fs::exists(dir + "/state/truth_c5.json"));
  CHECK(fs::exists(dir + "/state/mem_c5_m5.bin"));
  fs::remove_all(dir);
}

TEST_CASE("forecast experiment: lead zero matches the archived analysis") {
  const std::string dir = fresh_dir("enda_forecast");
  auto cfg = small_ring(dir);
  cfg.n_cycles = 14;
  cfg.archive_analysis = true;
  const auto rows = run_cycle_experiment(cfg).rows;

  ForecastSpec spec;
  spec.archive_dir = dir + "/archive";
  spec.lead_max = 2;
  spec.first_cycle = 6;
  spec.last_cycle = 12;
  spec.stride = 1;
  spec.output_csv = dir + "/leads.csv";
  const auto table = run_forecast_experiment(cfg, spec);
  REQUIRE(table.size() == 3);  // leads 0..2, single variable

  double mean_rmse = 0, mean_spread = 0;
  for (std::size_t c = 6; c <= 12; ++c) {
    mean_rmse += rows[c - 1].rmse_an;
    mean_spread += rows[c - 1].spread_an;
  }
  mean_rmse /= 7;
  mean_spread /= 7;
  CHECK(table[0].lead == 0);
  CHECK(table[0].rmse == doctest::Approx(mean_rmse).epsilon(1e-12));
  CHECK(std::abs(table[0].spread - mean_spread) < 1e-10);
  CHECK(fs::exists(spec.output_csv));

  // Missing archive entries are reported up front.
  ForecastSpec broken = spec;
  broken.last_cycle = 13;  // truth beyond cycle 14 does not exist
  CHECK_THROWS_WITH_AS(run_forecast_experiment(cfg, broken),
                       doctest::Contains("missing"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("nature and synthetic observation drivers") {
  const std::string dir = fresh_dir("enda_nature");
  auto kv = KeyValueConfig::parse_string(
      "model.type = surrogate\n"
      "model.n_lon = 16\n"
      "model.n_lat = 8\n"
      "model.levels = 925, 500\n"
      "obs.network.count.T = 25\n"
      "run.n_cycles = 3\n");
  auto cfg = ExperimentConfig::from_kv(kv);
  cfg.output_dir = dir;
  run_nature_experiment(cfg);
  for (int c = 0; c <= 3; ++c)
    CHECK(fs::exists(dir + "/truth_c" + std::to_string(c) + ".bin"));

  SynthObsSpec spec;
  spec.truth_dir = dir;
  spec.first_cycle = 1;
  spec.last_cycle = 3;
  spec.output_path = dir + "/obs.csv";
  run_synth_obs_experiment(cfg, spec);
  const auto obs = read_obs_file(spec.output_path);
  CHECK(obs.size() == 3 * 25);
  CHECK(obs[0].time == cfg.cycle_seconds);
  CHECK(obs[0].variable == ObsVar::T);
  REQUIRE(obs[0].error_std.has_value());

  // Ring models have no obs exchange format.
  auto ring_cfg = small_ring(dir);
  CHECK_THROWS_AS(run_synth_obs_experiment(ring_cfg, spec),
                  std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("file-based observations flow through the window") {
  const std::string dir = fresh_dir("enda_file_obs");
  // Nature run + synthetic obs file, then assimilate from the file.
  auto kv = KeyValueConfig::parse_string(
      "model.type = surrogate\n"
      "model.n_lon = 16\n"
      "model.n_lat = 8\n"
      "model.levels = 925, 500\n"
      "obs.network.count.T = 40\n"
      "run.n_cycles = 4\n");
  auto nat = ExperimentConfig::from_kv(kv);
  nat.output_dir = dir + "/nature";
  run_nature_experiment(nat);
  SynthObsSpec sspec;
  sspec.truth_dir = nat.output_dir;
  sspec.first_cycle = 1;
  sspec.last_cycle = 4;
  sspec.output_path = dir + "/obs.csv";
  run_synth_obs_experiment(nat, sspec);

  auto cfg = nat;
  cfg.output_dir = dir + "/run";
  cfg.obs_source = ObsSource::File;
  cfg.obs_file = sspec.output_path;
  cfg.da.ensemble_size = 6;
  const auto result = run_cycle_experiment(cfg);
  CHECK_FALSE(result.aborted);
  REQUIRE_FALSE(result.rows.empty());
  CHECK(result.rows[0].obs_raw == 4 * 40);
  CHECK(result.rows[0].obs_windowed == 40);  // only the matching cycle
  fs::remove_all(dir);
}
