#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <vector>

#include "letkf.hpp"
#include "obs.hpp"
#include "rng.hpp"
#include "state.hpp"

namespace enda {

// Deterministic single-step forecast model; one step is one DA cycle
// interval.
class ForecastModel {
 public:
  virtual ~ForecastModel() = default;
  virtual void step(Eigen::VectorXd& state) const = 0;
  virtual std::size_t state_size() const = 0;
};

struct Lorenz96Config {
  Eigen::Index n = 40;
  double forcing = 8.0;
  double dt = 0.05;  // one 6-hour cycle by the usual convention

  void validate() const;
};

Eigen::VectorXd lorenz96_tendency(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  double forcing);

// One RK4 step of size cfg.dt with cyclic indexing. Throws on
// non-finite input.
Eigen::VectorXd lorenz96_step(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Lorenz96Config& cfg);

class Lorenz96Model : public ForecastModel {
 public:
  explicit Lorenz96Model(Lorenz96Config cfg) : cfg_(cfg) { cfg_.validate(); }
  void step(Eigen::VectorXd& state) const override {
    state = lorenz96_step(state, cfg_);
  }
  std::size_t state_size() const override {
    return static_cast<std::size_t>(cfg_.n);
  }
  const Lorenz96Config& config() const { return cfg_; }

 private:
  Lorenz96Config cfg_;
};

// Lat-lon-pressure surrogate: semi-Lagrangian zonal advection per
// level, linear relaxation toward a stored climatology, and explicit
// diffusion. Longitude-periodic, latitude no-flux.
struct SurrogateConfig {
  StateLayout layout;
  std::vector<double> level_speed;  // cells/step per model level
  double surface_speed = 0.0;       // cells/step for surface fields
  double relax_rate = 0.0;          // 1/steps toward climatology, [0, 1]
  double diffusion = 0.0;           // explicit coefficient, stable in [0, 0.25)
  Eigen::VectorXd climatology;      // layout-sized

  void validate() const;
};

Eigen::VectorXd surrogate_step(const Eigen::Ref<const Eigen::VectorXd>& state,
                               const SurrogateConfig& cfg);

class SurrogateModel : public ForecastModel {
 public:
  explicit SurrogateModel(SurrogateConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }
  void step(Eigen::VectorXd& state) const override {
    state = surrogate_step(state, cfg_);
  }
  std::size_t state_size() const override { return cfg_.layout.size(); }
  const SurrogateConfig& config() const { return cfg_; }

 private:
  SurrogateConfig cfg_;
};

// Smooth zonally-structured climatology used by surrogate experiments.
Eigen::VectorXd default_surrogate_climatology(const StateLayout& layout);

// Spatially smoothed Gaussian field with the requested pointwise
// standard deviation; deterministic in (rng, tag).
Eigen::VectorXd smooth_random_field(const StateLayout& layout,
                                    const CounterRng& rng, std::uint64_t tag,
                                    double magnitude, int smoothing_passes = 4);

// Free trajectory; element [0] is the initial state and [s] the state
// after s steps. Throws std::runtime_error naming the step index if the
// state goes non-finite.
std::vector<Eigen::VectorXd> nature_run(const ForecastModel& model,
                                        const Eigen::VectorXd& initial_state,
                                        std::size_t n_steps);

struct NetworkEntry {
  GeoPoint point;
  ObsVar var = ObsVar::T;
};

// Random global network: positions uniform on the sphere, pressures
// log-uniform across the model levels for upper-air variables.
std::vector<NetworkEntry> make_random_network(
    const GridSpec& grid, const std::map<ObsVar, std::size_t>& counts,
    std::uint64_t seed);

// y = H(truth) + N(0, err^2); qmk = 0. Counter-based draws keyed by
// (cycle, obs index), so the batch is reproducible regardless of
// evaluation order.
ObsBatch synth_obs_grid(const StateLayout& layout,
                        const Eigen::Ref<const Eigen::VectorXd>& truth,
                        const std::vector<NetworkEntry>& network,
                        const std::map<ObsVar, double>& error_std,
                        const CounterRng& rng, std::uint64_t cycle,
                        std::int64_t time);

std::vector<RingObs> synth_obs_ring(
    const Eigen::Ref<const Eigen::VectorXd>& truth,
    const std::vector<std::size_t>& indices, double error_std,
    const CounterRng& rng, std::uint64_t cycle);

}  // namespace enda
