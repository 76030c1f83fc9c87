#include "../include/enda.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "config.hpp"
#include "cycle.hpp"
#include "geo.hpp"
#include "metrics.hpp"
#include "obs.hpp"
#include "state.hpp"
#include "thinning.hpp"

namespace {

void set_err(char* errbuf, size_t errlen, const char* msg) {
  if (!errbuf || errlen == 0) return;
  std::snprintf(errbuf, errlen, "%s", msg);
}

// Runs fn, translating exceptions into error codes + message.
template <typename Fn>
int guarded(char* errbuf, size_t errlen, Fn&& fn) {
  try {
    fn();
    return ENDA_OK;
  } catch (const std::invalid_argument& e) {
    set_err(errbuf, errlen, e.what());
    return ENDA_ERR_INVALID;
  } catch (const std::exception& e) {
    set_err(errbuf, errlen, e.what());
    return ENDA_ERR_RUNTIME;
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

struct enda_config {
  enda::KeyValueConfig kv;
};

extern "C" {

const char* enda_version(void) { return "0.1.0"; }

enda_config* enda_config_create(void) { return new enda_config(); }

int enda_config_load(const char* path, enda_config** out, char* errbuf,
                     size_t errlen) {
  if (!path || !out) {
    set_err(errbuf, errlen, "null argument");
    return ENDA_ERR_INVALID;
  }
  *out = nullptr;
  return guarded(errbuf, errlen, [&] {
    auto cfg = new enda_config{enda::KeyValueConfig::parse_file(path)};
    *out = cfg;
  });
}

int enda_config_set(enda_config* cfg, const char* key, const char* value,
                    char* errbuf, size_t errlen) {
  if (!cfg || !key || !value) {
    set_err(errbuf, errlen, "null argument");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] { cfg->kv.set(key, value); });
}

void enda_config_free(enda_config* cfg) { delete cfg; }

int enda_cycle_run(const enda_config* cfg, uint64_t* aborted_cycle,
                   char* errbuf, size_t errlen) {
  if (!cfg) {
    set_err(errbuf, errlen, "null config");
    return ENDA_ERR_INVALID;
  }
  if (aborted_cycle) *aborted_cycle = 0;
  return guarded(errbuf, errlen, [&] {
    const auto ec = enda::ExperimentConfig::from_kv(cfg->kv);
    cfg->kv.require_fully_consumed();
    const auto result = enda::run_cycle_experiment(ec);
    if (result.aborted && aborted_cycle)
      *aborted_cycle = static_cast<uint64_t>(result.aborted_cycle);
  });
}

int enda_forecast_run(const enda_config* cfg, char* errbuf, size_t errlen) {
  if (!cfg) {
    set_err(errbuf, errlen, "null config");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] {
    const auto ec = enda::ExperimentConfig::from_kv(cfg->kv);
    const auto spec = enda::ForecastSpec::from_kv(cfg->kv);
    cfg->kv.require_fully_consumed();
    enda::run_forecast_experiment(ec, spec);
  });
}

int enda_nature_run(const enda_config* cfg, char* errbuf, size_t errlen) {
  if (!cfg) {
    set_err(errbuf, errlen, "null config");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] {
    const auto ec = enda::ExperimentConfig::from_kv(cfg->kv);
    cfg->kv.require_fully_consumed();
    enda::run_nature_experiment(ec);
  });
}

int enda_synth_obs_run(const enda_config* cfg, char* errbuf, size_t errlen) {
  if (!cfg) {
    set_err(errbuf, errlen, "null config");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] {
    const auto ec = enda::ExperimentConfig::from_kv(cfg->kv);
    const auto spec = enda::SynthObsSpec::from_kv(cfg->kv);
    cfg->kv.require_fully_consumed();
    enda::run_synth_obs_experiment(ec, spec);
  });
}

int enda_thin_file(const enda_config* cfg, const char* in_obs_path,
                   const char* out_obs_path, const char* report_path,
                   char* errbuf, size_t errlen) {
  if (!cfg || !in_obs_path || !out_obs_path) {
    set_err(errbuf, errlen, "null argument");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] {
    const auto ec = enda::ExperimentConfig::from_kv(cfg->kv);
    cfg->kv.require_fully_consumed();
    const auto layout = enda::make_surrogate_layout(ec);
    enda::ObsBatch batch;
    batch.observations = enda::read_obs_file(in_obs_path);
    const auto result = enda::thin(batch, layout.grid, ec.thinning);
    enda::write_obs_file(result.selected.observations, out_obs_path);
    if (report_path)
      enda::write_density_report(result, layout.grid, report_path);
  });
}

int enda_metrics_files(const char* state_path, const char* truth_path,
                       const char* out_csv, char* errbuf, size_t errlen) {
  if (!state_path || !truth_path || !out_csv) {
    set_err(errbuf, errlen, "null argument");
    return ENDA_ERR_INVALID;
  }
  return guarded(errbuf, errlen, [&] {
    std::ofstream out(out_csv);
    if (!out) throw std::runtime_error(std::string("cannot write ") + out_csv);
    out << "var,level_hpa,rmse\n";
    if (ends_with(state_path, ".txt")) {
      const Eigen::VectorXd state = enda::read_ring_state(state_path);
      const Eigen::VectorXd truth = enda::read_ring_state(truth_path);
      const Eigen::VectorXd unit = Eigen::VectorXd::Ones(state.size());
      out << "X,0," << fmt17(enda::rmse(state, truth, unit)) << '\n';
      return;
    }
    const auto state = enda::read_state_file(state_path);
    const auto truth = enda::read_state_file(truth_path);
    if (state.layout.size() != truth.layout.size())
      throw std::runtime_error("state and truth layouts differ");
    const Eigen::VectorXd areas = enda::plane_areas(state.layout.grid);
    for (std::size_t v = 0; v < state.layout.vars.size(); ++v) {
      const auto& def = state.layout.vars[v];
      for (std::size_t l = 0; l < def.n_levels; ++l) {
        const double level =
            def.n_levels > 1 ? state.layout.grid.levels_hpa[l] : 0.0;
        const double score =
            enda::rmse(enda::extract_slice(state.layout, state.state, v, l),
                       enda::extract_slice(truth.layout, truth.state, v, l),
                       areas);
        out << enda::obs_var_name(def.var) << ',' << fmt17(level) << ','
            << fmt17(score) << '\n';
      }
    }
  });
}

double enda_great_circle_km(double lat1_deg, double lon1_deg, double lat2_deg,
                            double lon2_deg) {
  return enda::great_circle_km({lat1_deg, lon1_deg}, {lat2_deg, lon2_deg});
}

}  // extern "C"
