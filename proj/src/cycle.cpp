#include "cycle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "metrics.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace enda {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double variable_scale(ObsVar var) {
  switch (var) {
    case ObsVar::U:
    case ObsVar::V: return 1.0;  // m/s
    case ObsVar::T: return 1.0;  // K
    case ObsVar::Q: return 1e-3; // kg/kg
    case ObsVar::PS: return 1.0; // hPa
  }
  return 1.0;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig c;
  const std::string model = kv.get_string("model.type", "lorenz96");
  if (model == "lorenz96") {
    c.model = ModelKind::Lorenz96;
  } else if (model == "surrogate") {
    c.model = ModelKind::Surrogate;
  } else {
    throw std::runtime_error("model.type must be lorenz96 or surrogate");
  }

  c.lorenz.n = kv.get_int("model.n", 40);
  c.lorenz.forcing = kv.get_double("model.forcing", 8.0);
  c.lorenz.dt = kv.get_double("model.dt", 0.05);
  c.ring_obs_every = static_cast<std::size_t>(kv.get_int("obs.every", 1));
  c.ring_obs_error = kv.get_double("obs.error", 1.0);

  if (const auto vars = kv.get_optional("model.vars")) {
    c.surrogate_vars.clear();
    for (const auto& name : split_list(*vars)) {
      const auto v = parse_obs_var(name);
      if (!v) throw std::runtime_error("model.vars: unknown variable " + name);
      c.surrogate_vars.push_back(*v);
    }
  }
  c.grid_n_lon = static_cast<std::size_t>(kv.get_int("model.n_lon", 64));
  c.grid_n_lat = static_cast<std::size_t>(kv.get_int("model.n_lat", 32));
  if (const auto levels = kv.get_optional("model.levels")) {
    c.grid_levels.clear();
    for (const auto& s : split_list(*levels)) c.grid_levels.push_back(std::stod(s));
  }
  c.speed_base = kv.get_double("model.speed_base", 0.6);
  c.speed_per_level = kv.get_double("model.speed_per_level", 0.15);
  c.surface_speed = kv.get_double("model.surface_speed", 0.4);
  c.surrogate_relax_rate = kv.get_double("model.relax_rate", 0.004);
  c.surrogate_diffusion = kv.get_double("model.diffusion", 0.05);

  for (ObsVar v : {ObsVar::U, ObsVar::V, ObsVar::T, ObsVar::Q, ObsVar::PS}) {
    const std::string name = obs_var_name(v);
    const long count = kv.get_int("obs.network.count." + name, 0);
    if (count > 0) c.network_counts[v] = static_cast<std::size_t>(count);
    const double err = kv.get_double(
        "obs.error." + name, *assign_default_error({.variable = v}).error_std);
    c.obs_error[v] = err;
  }
  c.network_seed = static_cast<std::uint64_t>(kv.get_int("obs.network.seed", 7));

  c.da.ensemble_size =
      static_cast<std::size_t>(kv.get_int("da.ensemble_size", 20));
  c.da.rho_h_km = kv.get_double("da.rho_h", 600.0);
  c.da.rho_v_logp = kv.get_double("da.rho_v", 0.1);
  c.da.relaxation = parse_relaxation(kv.get_string("da.relaxation", "rtpp"));
  c.da.alpha = kv.get_double(
      "da.alpha", c.da.relaxation == Relaxation::RTPS ? 1.2 : 0.9);
  c.da.gross_error_factor = kv.get_double("da.gross_error_factor", 10.0);
  c.da.ring_rho_intervals = kv.get_double("da.ring_rho", 4.0);

  c.thinning_enabled = kv.get_bool("thinning.enabled", true);
  c.thinning.r_h_km = kv.get_double("thinning.r_h", 500.0);
  c.thinning.r_v_logp = kv.get_double("thinning.r_v", 0.1);
  c.thinning.w_max = kv.get_double("thinning.w_max", 1.0);
  c.thinning.c_thresh = kv.get_double("thinning.c_thresh", 0.01);
  const long m_thresh = kv.get_int("thinning.m_thresh", 0);
  if (m_thresh > 0) c.thinning.m_thresh = static_cast<std::size_t>(m_thresh);
  c.thinning.epsilon = kv.get_double("thinning.epsilon", 1e-10);
  c.thinning.global_saturation_exit =
      kv.get_bool("thinning.global_saturation_exit", false);
  c.thinning.use_update_flags = kv.get_bool("thinning.use_update_flags", true);

  const std::string source = kv.get_string("obs.source", "synth");
  if (source == "synth") c.obs_source = ObsSource::Synth;
  else if (source == "file") c.obs_source = ObsSource::File;
  else if (source == "none") c.obs_source = ObsSource::None;
  else throw std::runtime_error("obs.source must be synth, file or none");
  c.obs_file = kv.get_string("obs.file", "");
  c.window_half_width = kv.get_int("obs.window_half_width", 1800);

  const std::string init = kv.get_string("init.mode", "perturb");
  if (init == "perturb") c.init_mode = InitMode::Perturb;
  else if (init == "lagged") c.init_mode = InitMode::Lagged;
  else if (init == "resume") c.init_mode = InitMode::Resume;
  else throw std::runtime_error("init.mode must be perturb, lagged or resume");
  c.init_magnitude = kv.get_double("init.magnitude", 1.0);
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init.seed", 1));
  c.lagged_stride = static_cast<std::size_t>(kv.get_int("init.stride", 4));
  c.resume_dir = kv.get_string("init.resume_dir", "");
  c.resume_cycle = static_cast<std::size_t>(kv.get_int("init.resume_cycle", 0));

  c.truth_seed = static_cast<std::uint64_t>(kv.get_int("truth.seed", 42));
  c.truth_burnin = static_cast<std::size_t>(kv.get_int("truth.burnin", 1440));
  c.truth_anomaly = kv.get_double("truth.anomaly", 3.0);

  c.n_cycles = static_cast<std::size_t>(kv.get_int("run.n_cycles", 100));
  c.spinup_cycles = static_cast<std::size_t>(kv.get_int("run.spinup_cycles", 0));
  c.cycle_seconds = kv.get_int("run.cycle_seconds", 21600);
  c.start_time = kv.get_int("run.start_time", 0);
  c.run_seed = static_cast<std::uint64_t>(kv.get_int("run.seed", 0));

  c.output_dir = kv.get_string("output.dir", "");
  c.snapshot_every =
      static_cast<std::size_t>(kv.get_int("output.snapshot_every", 0));
  c.archive_analysis = kv.get_bool("output.archive_analysis", false);
  c.emit_rmse_raster = kv.get_bool("output.rmse_raster", false);
  c.metrics_enabled = kv.get_bool("metrics.enabled", true);
  return c;
}

void ExperimentConfig::validate() const {
  if (n_cycles < 1)
    throw std::invalid_argument("run.n_cycles must be >= 1");
  if (spinup_cycles >= n_cycles && spinup_cycles != 0)
    throw std::invalid_argument("run.spinup_cycles must be below run.n_cycles");
  if (output_dir.empty())
    throw std::invalid_argument("output.dir is required");
  if (obs_source == ObsSource::File && obs_file.empty())
    throw std::invalid_argument("obs.file is required with obs.source=file");
  if (init_mode == InitMode::Resume &&
      (resume_dir.empty() || resume_cycle == 0))
    throw std::invalid_argument(
        "init.resume_dir and init.resume_cycle are required to resume");
  da.validate();
  if (model == ModelKind::Lorenz96) {
    lorenz.validate();
    if (obs_source == ObsSource::File)
      throw std::invalid_argument(
          "ring experiments use synthetic observations (obs.source=synth)");
    if (ring_obs_every == 0)
      throw std::invalid_argument("obs.every must be >= 1");
  }
}

StateLayout make_surrogate_layout(const ExperimentConfig& cfg) {
  StateLayout layout;
  layout.grid = GridSpec::regular(cfg.grid_n_lon, cfg.grid_n_lat, cfg.grid_levels);
  for (ObsVar v : cfg.surrogate_vars)
    layout.vars.push_back({v, v == ObsVar::PS ? 1 : layout.grid.n_levels()});
  return layout;
}

SurrogateModel make_surrogate_model(const ExperimentConfig& cfg) {
  SurrogateConfig sc;
  sc.layout = make_surrogate_layout(cfg);
  sc.level_speed.resize(sc.layout.grid.n_levels());
  for (std::size_t l = 0; l < sc.level_speed.size(); ++l)
    sc.level_speed[l] = cfg.speed_base + cfg.speed_per_level * static_cast<double>(l);
  sc.surface_speed = cfg.surface_speed;
  sc.relax_rate = cfg.surrogate_relax_rate;
  sc.diffusion = cfg.surrogate_diffusion;
  sc.climatology = default_surrogate_climatology(sc.layout);
  return SurrogateModel(std::move(sc));
}

Eigen::MatrixXd make_initial_ensemble_ring(
    const std::vector<Eigen::VectorXd>& nature_tail, std::size_t k,
    const InitSpec& spec) {
  if (nature_tail.empty())
    throw std::invalid_argument("make_initial_ensemble_ring: empty nature tail");
  const Eigen::VectorXd& start = nature_tail.back();
  Eigen::MatrixXd members(start.size(), static_cast<Eigen::Index>(k));
  if (spec.mode == InitMode::Lagged) {
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t back = m * spec.stride;
      if (back >= nature_tail.size())
        throw std::runtime_error(
            "lagged initial ensemble: stride exceeds nature-run length");
      members.col(static_cast<Eigen::Index>(m)) =
          nature_tail[nature_tail.size() - 1 - back];
    }
    return members;
  }
  const CounterRng rng(spec.seed);
  for (std::size_t m = 0; m < k; ++m)
    for (Eigen::Index j = 0; j < start.size(); ++j)
      members(j, static_cast<Eigen::Index>(m)) =
          start[j] +
          spec.magnitude * rng.normal(m, static_cast<std::uint64_t>(j), 0x171);
  return members;
}

Eigen::MatrixXd make_initial_ensemble_grid(
    const StateLayout& layout, const std::vector<Eigen::VectorXd>& nature_tail,
    std::size_t k, const InitSpec& spec) {
  if (nature_tail.empty())
    throw std::invalid_argument("make_initial_ensemble_grid: empty nature tail");
  const Eigen::VectorXd& start = nature_tail.back();
  Eigen::MatrixXd members(start.size(), static_cast<Eigen::Index>(k));
  if (spec.mode == InitMode::Lagged) {
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t back = m * spec.stride;
      if (back >= nature_tail.size())
        throw std::runtime_error(
            "lagged initial ensemble: stride exceeds nature-run length");
      members.col(static_cast<Eigen::Index>(m)) =
          nature_tail[nature_tail.size() - 1 - back];
    }
    return members;
  }
  const CounterRng rng(spec.seed);
  for (std::size_t m = 0; m < k; ++m) {
    Eigen::VectorXd pert =
        smooth_random_field(layout, rng, m + 1, 1.0);
    for (std::size_t v = 0; v < layout.vars.size(); ++v) {
      const auto off = static_cast<Eigen::Index>(layout.var_offset(v));
      const auto len = static_cast<Eigen::Index>(
          layout.vars[v].n_levels * layout.grid.n_columns());
      pert.segment(off, len) *=
          spec.magnitude * variable_scale(layout.vars[v].var);
    }
    members.col(static_cast<Eigen::Index>(m)) = start + pert;
  }
  return members;
}

namespace {

class ReportWriter {
 public:
  ReportWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path);
    out_ << "cycle,time,var,level_hpa,rmse_bg,spread_bg,rmse_an,spread_an,"
            "obs_raw,obs_windowed,obs_thinned,obs_rejected\n";
    out_.flush();
  }
  void write(const CycleReportRow& r) {
    out_ << r.cycle << ',' << r.time << ',' << r.var << ','
         << fmt17(r.level_hpa) << ',' << fmt17(r.rmse_bg) << ','
         << fmt17(r.spread_bg) << ',' << fmt17(r.rmse_an) << ','
         << fmt17(r.spread_an) << ',' << r.obs_raw << ',' << r.obs_windowed
         << ',' << r.obs_thinned << ',' << r.obs_rejected << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string ring_member_path(const std::string& dir, std::size_t cycle,
                             std::size_t member) {
  return dir + "/mem_c" + std::to_string(cycle) + "_m" +
         std::to_string(member) + ".txt";
}
std::string ring_truth_path(const std::string& dir, std::size_t cycle) {
  return dir + "/truth_c" + std::to_string(cycle) + ".txt";
}
std::string grid_member_base(const std::string& dir, std::size_t cycle,
                             std::size_t member) {
  return dir + "/mem_c" + std::to_string(cycle) + "_m" +
         std::to_string(member);
}
std::string grid_truth_base(const std::string& dir, std::size_t cycle) {
  return dir + "/truth_c" + std::to_string(cycle);
}

// Spun-up ring truth at the experiment start (before any lagged tail).
Eigen::VectorXd ring_truth_init(const ExperimentConfig& cfg) {
  const CounterRng truth_rng(cfg.truth_seed);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(cfg.lorenz.n, cfg.lorenz.forcing);
  for (Eigen::Index j = 0; j < x.size(); ++j)
    x[j] += 0.01 * truth_rng.normal(static_cast<std::uint64_t>(j));
  for (std::size_t s = 0; s < cfg.truth_burnin; ++s)
    x = lorenz96_step(x, cfg.lorenz);
  return x;
}

// Climatology plus a smooth per-variable-scaled anomaly.
Eigen::VectorXd grid_truth_init(const ExperimentConfig& cfg,
                                const StateLayout& layout,
                                const Eigen::VectorXd& climatology) {
  const CounterRng truth_rng(cfg.truth_seed);
  Eigen::VectorXd anomaly = smooth_random_field(layout, truth_rng, 0xee, 1.0);
  for (std::size_t v = 0; v < layout.vars.size(); ++v) {
    const auto off = static_cast<Eigen::Index>(layout.var_offset(v));
    const auto len = static_cast<Eigen::Index>(
        layout.vars[v].n_levels * layout.grid.n_columns());
    anomaly.segment(off, len) *=
        cfg.truth_anomaly * variable_scale(layout.vars[v].var);
  }
  return climatology + anomaly;
}

CycleResult run_ring_experiment(const ExperimentConfig& cfg) {
  const Lorenz96Model model(cfg.lorenz);
  const std::size_t k = cfg.da.ensemble_size;
  const auto n = static_cast<Eigen::Index>(model.state_size());
  const std::string state_dir = cfg.output_dir + "/state";
  const std::string archive_dir = cfg.output_dir + "/archive";
  fs::create_directories(state_dir);
  if (cfg.archive_analysis) fs::create_directories(archive_dir);

  Eigen::VectorXd truth;
  Eigen::MatrixXd members;
  std::size_t start_cycle = 0;

  if (cfg.init_mode == InitMode::Resume) {
    start_cycle = cfg.resume_cycle;
    truth = read_ring_state(ring_truth_path(cfg.resume_dir, start_cycle));
    members.resize(n, static_cast<Eigen::Index>(k));
    for (std::size_t m = 0; m < k; ++m)
      members.col(static_cast<Eigen::Index>(m)) =
          read_ring_state(ring_member_path(cfg.resume_dir, start_cycle, m));
  } else {
    Eigen::VectorXd x = ring_truth_init(cfg);
    std::vector<Eigen::VectorXd> tail{x};
    if (cfg.init_mode == InitMode::Lagged) {
      const std::size_t extra = (k - 1) * cfg.lagged_stride;
      tail = nature_run(model, x, extra);
    }
    truth = tail.back();
    members = make_initial_ensemble_ring(
        tail, k,
        {cfg.init_mode, cfg.init_magnitude, cfg.init_seed, cfg.lagged_stride});
  }

  std::vector<std::size_t> obs_indices;
  for (std::size_t j = 0; j < model.state_size(); j += cfg.ring_obs_every)
    obs_indices.push_back(j);

  ReportWriter reports(cfg.output_dir + "/reports.csv");
  const std::string innov_path = cfg.output_dir + "/innovations.csv";
  write_innovation_records({}, 0, innov_path, false);
  const CounterRng obs_rng(cfg.run_seed);
  const Eigen::VectorXd unit_area = Eigen::VectorXd::Ones(n);
  const bool da_active = cfg.obs_source != ObsSource::None;

  CycleResult result;
  auto snapshot = [&](const std::string& dir, std::size_t cycle) {
    write_ring_state(ring_truth_path(dir, cycle), truth);
    for (std::size_t m = 0; m < k; ++m)
      write_ring_state(ring_member_path(dir, cycle, m),
                       members.col(static_cast<Eigen::Index>(m)));
  };
  if (start_cycle == 0 && cfg.archive_analysis) snapshot(archive_dir, 0);

  for (std::size_t cycle = start_cycle + 1; cycle <= cfg.n_cycles; ++cycle) {
    try {
      Eigen::VectorXd col(n);
      for (std::size_t m = 0; m < k; ++m) {
        col = members.col(static_cast<Eigen::Index>(m));
        col = lorenz96_step(col, cfg.lorenz);
        members.col(static_cast<Eigen::Index>(m)) = col;
      }
      truth = lorenz96_step(truth, cfg.lorenz);
      if (!members.allFinite())
        throw std::runtime_error("non-finite ensemble state");
    } catch (const std::exception&) {
      result.aborted = true;
      result.aborted_cycle = cycle;
      break;
    }

    const Eigen::MatrixXd background = members;
    CycleReportRow row;
    row.cycle = cycle;
    row.time = cfg.start_time +
               static_cast<std::int64_t>(cycle) * cfg.cycle_seconds;
    row.var = "X";

    if (da_active) {
      const auto obs =
          synth_obs_ring(truth, obs_indices, cfg.ring_obs_error, obs_rng, cycle);
      row.obs_raw = row.obs_windowed = row.obs_thinned = obs.size();

      // Gross error check against the background-mean equivalents.
      std::vector<RingObs> accepted;
      std::vector<InnovationRecord> records;
      for (std::size_t j = 0; j < obs.size(); ++j) {
        const double equiv =
            background.row(static_cast<Eigen::Index>(obs[j].index)).mean();
        InnovationRecord rec;
        rec.obs_index = j;
        rec.variable = ObsVar::T;
        rec.lon_deg = static_cast<double>(obs[j].index);
        rec.background_equiv = equiv;
        rec.departure = obs[j].value - equiv;
        rec.accepted = gross_error_check(rec.departure, obs[j].error_std,
                                         cfg.da.gross_error_factor);
        records.push_back(rec);
        if (rec.accepted) accepted.push_back(obs[j]);
      }
      row.obs_rejected = obs.size() - accepted.size();
      write_innovation_records(records, static_cast<std::int64_t>(cycle),
                               innov_path, true);

      Eigen::MatrixXd analysis =
          letkf_analysis_ring(background, accepted, cfg.da);
      members = apply_relaxation(analysis, background, cfg.da);
    }

    if (cfg.metrics_enabled) {
      row.rmse_bg = rmse(background.rowwise().mean(), truth, unit_area);
      row.spread_bg = spread(background, unit_area);
      row.rmse_an = rmse(members.rowwise().mean(), truth, unit_area);
      row.spread_an = spread(members, unit_area);
    }
    result.rows.push_back(row);
    reports.write(row);

    if (cfg.archive_analysis) snapshot(archive_dir, cycle);
    if ((cfg.snapshot_every > 0 && cycle % cfg.snapshot_every == 0) ||
        cycle == cfg.n_cycles)
      snapshot(state_dir, cycle);
  }
  return result;
}

CycleResult run_grid_experiment(const ExperimentConfig& cfg) {
  const SurrogateModel model = make_surrogate_model(cfg);
  const StateLayout layout = model.config().layout;
  const std::size_t k = cfg.da.ensemble_size;
  const auto state_n = static_cast<Eigen::Index>(layout.size());
  const std::string state_dir = cfg.output_dir + "/state";
  const std::string archive_dir = cfg.output_dir + "/archive";
  fs::create_directories(state_dir);
  if (cfg.archive_analysis) fs::create_directories(archive_dir);

  EnsembleState ens;
  ens.layout = layout;
  Eigen::VectorXd truth;
  std::size_t start_cycle = 0;

  if (cfg.init_mode == InitMode::Resume) {
    start_cycle = cfg.resume_cycle;
    truth = read_state_file(grid_truth_base(cfg.resume_dir, start_cycle)).state;
    ens.members.resize(state_n, static_cast<Eigen::Index>(k));
    for (std::size_t m = 0; m < k; ++m)
      ens.members.col(static_cast<Eigen::Index>(m)) =
          read_state_file(grid_member_base(cfg.resume_dir, start_cycle, m))
              .state;
  } else {
    Eigen::VectorXd truth0 =
        grid_truth_init(cfg, layout, model.config().climatology);
    std::vector<Eigen::VectorXd> tail{truth0};
    if (cfg.init_mode == InitMode::Lagged)
      tail = nature_run(model, truth0, (k - 1) * cfg.lagged_stride);
    truth = tail.back();
    ens.members = make_initial_ensemble_grid(
        layout, tail, k,
        {cfg.init_mode, cfg.init_magnitude, cfg.init_seed, cfg.lagged_stride});
  }

  const auto network =
      make_random_network(layout.grid, cfg.network_counts, cfg.network_seed);
  std::vector<Observation> file_obs;
  if (cfg.obs_source == ObsSource::File) file_obs = read_obs_file(cfg.obs_file);

  ReportWriter reports(cfg.output_dir + "/reports.csv");
  const std::string innov_path = cfg.output_dir + "/innovations.csv";
  write_innovation_records({}, 0, innov_path, false);
  const CounterRng obs_rng(cfg.run_seed);
  const bool da_active = cfg.obs_source != ObsSource::None;
  const std::size_t spinup = cfg.effective_spinup();

  Eigen::VectorXd raster_sq = Eigen::VectorXd::Zero(state_n);
  Eigen::VectorXd raster_var = Eigen::VectorXd::Zero(state_n);
  std::size_t raster_count = 0;

  CycleResult result;
  auto snapshot = [&](const std::string& dir, std::size_t cycle,
                      std::int64_t time) {
    write_state_file(grid_truth_base(dir, cycle), layout, truth, time);
    for (std::size_t m = 0; m < k; ++m)
      write_state_file(grid_member_base(dir, cycle, m), layout,
                       ens.members.col(static_cast<Eigen::Index>(m)), time);
  };
  if (start_cycle == 0 && cfg.archive_analysis)
    snapshot(archive_dir, 0, cfg.start_time);

  for (std::size_t cycle = start_cycle + 1; cycle <= cfg.n_cycles; ++cycle) {
    const std::int64_t time =
        cfg.start_time + static_cast<std::int64_t>(cycle) * cfg.cycle_seconds;
    try {
      Eigen::VectorXd col(state_n);
      for (std::size_t m = 0; m < k; ++m) {
        col = ens.members.col(static_cast<Eigen::Index>(m));
        col = surrogate_step(col, model.config());
        ens.members.col(static_cast<Eigen::Index>(m)) = col;
      }
      truth = surrogate_step(truth, model.config());
      if (!ens.members.allFinite() || !truth.allFinite())
        throw std::runtime_error("non-finite state");
    } catch (const std::exception&) {
      result.aborted = true;
      result.aborted_cycle = cycle;
      break;
    }

    const EnsembleState background = ens;
    std::size_t obs_raw = 0, obs_windowed = 0, obs_thinned = 0,
                obs_rejected = 0;

    if (da_active) {
      ObsBatch windowed;
      if (cfg.obs_source == ObsSource::Synth) {
        windowed = synth_obs_grid(layout, truth, network, cfg.obs_error,
                                  obs_rng, cycle, time);
        windowed.window_half_width = cfg.window_half_width;
        obs_raw = network.size();
      } else {
        obs_raw = file_obs.size();
        windowed = select_window(file_obs, time, cfg.window_half_width);
      }
      obs_windowed = windowed.observations.size();
      for (auto& o : windowed.observations) o = assign_default_error(o);

      ObsBatch thinned;
      if (cfg.thinning_enabled) {
        thinned = thin(windowed, layout.grid, cfg.thinning).selected;
      } else {
        thinned = windowed;
      }
      obs_thinned = thinned.observations.size();

      const auto eval = evaluate_obs(background, thinned.observations);
      std::vector<std::size_t> accepted_idx;
      const auto records =
          gross_error_filter(thinned.observations, eval,
                             cfg.da.gross_error_factor, accepted_idx);
      obs_rejected = thinned.observations.size() - accepted_idx.size();
      write_innovation_records(records, static_cast<std::int64_t>(cycle),
                               innov_path, true);
      std::vector<Observation> accepted;
      accepted.reserve(accepted_idx.size());
      for (std::size_t j : accepted_idx)
        accepted.push_back(thinned.observations[j]);

      EnsembleState analysis = letkf_analysis(background, accepted, cfg.da);
      ens.members =
          apply_relaxation(analysis.members, background.members, cfg.da);
    }

    if (cfg.metrics_enabled) {
      const auto bg_scores = score_ensemble(background, truth);
      const auto an_scores = score_ensemble(ens, truth);
      for (std::size_t s = 0; s < bg_scores.size(); ++s) {
        CycleReportRow row;
        row.cycle = cycle;
        row.time = time;
        row.var = obs_var_name(bg_scores[s].var);
        row.level_hpa = bg_scores[s].level_hpa;
        row.rmse_bg = bg_scores[s].rmse;
        row.spread_bg = bg_scores[s].spread;
        row.rmse_an = an_scores[s].rmse;
        row.spread_an = an_scores[s].spread;
        row.obs_raw = obs_raw;
        row.obs_windowed = obs_windowed;
        row.obs_thinned = obs_thinned;
        row.obs_rejected = obs_rejected;
        result.rows.push_back(row);
        reports.write(row);
      }
    }

    if (cfg.emit_rmse_raster && cycle > spinup) {
      const Eigen::VectorXd mean = ens.mean();
      raster_sq.array() += (mean - truth).array().square();
      const double norm = 1.0 / static_cast<double>(k - 1);
      raster_var.array() +=
          (ens.members.colwise() - mean).array().square().rowwise().sum() *
          norm;
      ++raster_count;
    }

    if (cfg.archive_analysis) snapshot(archive_dir, cycle, time);
    if ((cfg.snapshot_every > 0 && cycle % cfg.snapshot_every == 0) ||
        cycle == cfg.n_cycles)
      snapshot(state_dir, cycle, time);
  }

  if (cfg.emit_rmse_raster && raster_count > 0) {
    const double inv = 1.0 / static_cast<double>(raster_count);
    write_state_file(cfg.output_dir + "/rmse_raster", layout,
                     (raster_sq * inv).cwiseSqrt(), 0);
    write_state_file(cfg.output_dir + "/spread_raster", layout,
                     (raster_var * inv).cwiseSqrt(), 0);
  }
  return result;
}

}  // namespace

CycleResult run_cycle_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  return cfg.model == ModelKind::Lorenz96 ? run_ring_experiment(cfg)
                                          : run_grid_experiment(cfg);
}

void run_nature_experiment(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty())
    throw std::invalid_argument("output.dir is required");
  fs::create_directories(cfg.output_dir);
  if (cfg.model == ModelKind::Lorenz96) {
    cfg.lorenz.validate();
    Eigen::VectorXd truth = ring_truth_init(cfg);
    write_ring_state(ring_truth_path(cfg.output_dir, 0), truth);
    for (std::size_t c = 1; c <= cfg.n_cycles; ++c) {
      truth = lorenz96_step(truth, cfg.lorenz);
      write_ring_state(ring_truth_path(cfg.output_dir, c), truth);
    }
    return;
  }
  const SurrogateModel model = make_surrogate_model(cfg);
  const StateLayout& layout = model.config().layout;
  Eigen::VectorXd truth =
      grid_truth_init(cfg, layout, model.config().climatology);
  write_state_file(grid_truth_base(cfg.output_dir, 0), layout, truth,
                   cfg.start_time);
  for (std::size_t c = 1; c <= cfg.n_cycles; ++c) {
    truth = surrogate_step(truth, model.config());
    write_state_file(grid_truth_base(cfg.output_dir, c), layout, truth,
                     cfg.start_time +
                         static_cast<std::int64_t>(c) * cfg.cycle_seconds);
  }
}

SynthObsSpec SynthObsSpec::from_kv(const KeyValueConfig& kv) {
  SynthObsSpec s;
  s.truth_dir = kv.require_string("synth.truth_dir");
  s.first_cycle = static_cast<std::size_t>(kv.get_int("synth.first_cycle", 1));
  s.last_cycle = static_cast<std::size_t>(kv.get_int("synth.last_cycle", 1));
  s.output_path = kv.require_string("synth.output");
  return s;
}

void run_synth_obs_experiment(const ExperimentConfig& cfg,
                              const SynthObsSpec& spec) {
  if (cfg.model != ModelKind::Surrogate)
    throw std::invalid_argument(
        "synthetic observation files are gridded-model only");
  if (spec.last_cycle < spec.first_cycle)
    throw std::invalid_argument("synth: bad cycle range");
  const StateLayout layout = make_surrogate_layout(cfg);
  const auto network =
      make_random_network(layout.grid, cfg.network_counts, cfg.network_seed);
  const CounterRng rng(cfg.run_seed);
  std::vector<Observation> all;
  for (std::size_t c = spec.first_cycle; c <= spec.last_cycle; ++c) {
    const StateFile truth = read_state_file(grid_truth_base(spec.truth_dir, c));
    const std::int64_t time =
        cfg.start_time + static_cast<std::int64_t>(c) * cfg.cycle_seconds;
    const ObsBatch batch =
        synth_obs_grid(layout, truth.state, network, cfg.obs_error, rng, c, time);
    all.insert(all.end(), batch.observations.begin(), batch.observations.end());
  }
  write_obs_file(all, spec.output_path);
}

ForecastSpec ForecastSpec::from_kv(const KeyValueConfig& kv) {
  ForecastSpec s;
  s.archive_dir = kv.require_string("forecast.archive_dir");
  s.lead_max = static_cast<std::size_t>(kv.get_int("forecast.lead_max", 8));
  s.first_cycle = static_cast<std::size_t>(kv.get_int("forecast.first_cycle", 1));
  s.last_cycle = static_cast<std::size_t>(kv.get_int("forecast.last_cycle", 1));
  s.stride = static_cast<std::size_t>(kv.get_int("forecast.stride", 1));
  s.output_csv = kv.get_string("forecast.output", "");
  return s;
}

std::vector<LeadScore> run_forecast_experiment(const ExperimentConfig& cfg,
                                               const ForecastSpec& spec) {
  if (spec.stride == 0 || spec.last_cycle < spec.first_cycle)
    throw std::invalid_argument("forecast: bad initial-cycle range");
  const bool ring = cfg.model == ModelKind::Lorenz96;
  const std::size_t k = cfg.da.ensemble_size;

  // Verify the archive is complete before doing any work.
  std::vector<std::string> missing;
  auto need = [&](const std::string& path) {
    if (!fs::exists(path)) missing.push_back(path);
  };
  for (std::size_t c = spec.first_cycle; c <= spec.last_cycle; c += spec.stride)
    for (std::size_t m = 0; m < k; ++m)
      need(ring ? ring_member_path(spec.archive_dir, c, m)
                : grid_member_base(spec.archive_dir, c, m) + ".bin");
  for (std::size_t c = spec.first_cycle;
       c <= spec.last_cycle + spec.lead_max; ++c)
    need(ring ? ring_truth_path(spec.archive_dir, c)
              : grid_truth_base(spec.archive_dir, c) + ".bin");
  if (!missing.empty()) {
    std::string msg = "forecast: missing archive entries:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw std::runtime_error(msg);
  }

  const Lorenz96Model ring_model(cfg.lorenz);
  std::unique_ptr<SurrogateModel> grid_model;
  StateLayout layout;
  if (!ring) {
    grid_model = std::make_unique<SurrogateModel>(make_surrogate_model(cfg));
    layout = grid_model->config().layout;
  }

  // Accumulate scores per (lead, variable slot).
  std::vector<LeadScore> table;
  std::size_t n_initials = 0;
  for (std::size_t c = spec.first_cycle; c <= spec.last_cycle;
       c += spec.stride) {
    ++n_initials;
    Eigen::MatrixXd members;
    if (ring) {
      members.resize(cfg.lorenz.n, static_cast<Eigen::Index>(k));
      for (std::size_t m = 0; m < k; ++m)
        members.col(static_cast<Eigen::Index>(m)) =
            read_ring_state(ring_member_path(spec.archive_dir, c, m));
    } else {
      members.resize(static_cast<Eigen::Index>(layout.size()),
                     static_cast<Eigen::Index>(k));
      for (std::size_t m = 0; m < k; ++m)
        members.col(static_cast<Eigen::Index>(m)) =
            read_state_file(grid_member_base(spec.archive_dir, c, m)).state;
    }

    for (std::size_t lead = 0; lead <= spec.lead_max; ++lead) {
      if (lead > 0) {
        Eigen::VectorXd col;
        for (std::size_t m = 0; m < k; ++m) {
          col = members.col(static_cast<Eigen::Index>(m));
          if (ring)
            col = lorenz96_step(col, cfg.lorenz);
          else
            col = surrogate_step(col, grid_model->config());
          members.col(static_cast<Eigen::Index>(m)) = col;
        }
      }
      std::vector<LeadScore> scores;
      if (ring) {
        const Eigen::VectorXd truth =
            read_ring_state(ring_truth_path(spec.archive_dir, c + lead));
        const Eigen::VectorXd unit = Eigen::VectorXd::Ones(truth.size());
        LeadScore s;
        s.lead = lead;
        s.var = "X";
        s.rmse = rmse(members.rowwise().mean(), truth, unit);
        s.spread = spread(members, unit);
        scores.push_back(s);
      } else {
        const Eigen::VectorXd truth =
            read_state_file(grid_truth_base(spec.archive_dir, c + lead)).state;
        EnsembleState es;
        es.layout = layout;
        es.members = members;
        for (const auto& vs : score_ensemble(es, truth)) {
          LeadScore s;
          s.lead = lead;
          s.var = obs_var_name(vs.var);
          s.level_hpa = vs.level_hpa;
          s.rmse = vs.rmse;
          s.spread = vs.spread;
          scores.push_back(s);
        }
      }
      for (const auto& s : scores) {
        auto it = std::find_if(table.begin(), table.end(), [&](const LeadScore& t) {
          return t.lead == s.lead && t.var == s.var && t.level_hpa == s.level_hpa;
        });
        if (it == table.end()) {
          table.push_back(s);
        } else {
          it->rmse += s.rmse;
          it->spread += s.spread;
        }
      }
    }
  }
  for (auto& s : table) {
    s.rmse /= static_cast<double>(n_initials);
    s.spread /= static_cast<double>(n_initials);
  }
  std::sort(table.begin(), table.end(), [](const LeadScore& a, const LeadScore& b) {
    return std::tie(a.lead, a.var, a.level_hpa) <
           std::tie(b.lead, b.var, b.level_hpa);
  });

  if (!spec.output_csv.empty()) {
    std::ofstream out(spec.output_csv);
    if (!out) throw std::runtime_error("cannot write " + spec.output_csv);
    out << "lead,var,level_hpa,rmse,spread\n";
    for (const auto& s : table)
      out << s.lead << ',' << s.var << ',' << fmt17(s.level_hpa) << ','
          << fmt17(s.rmse) << ',' << fmt17(s.spread) << '\n';
  }
  return table;
}

}  // namespace enda
