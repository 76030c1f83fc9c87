#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "geo.hpp"
#include "obs.hpp"

namespace enda {

struct VarDef {
  ObsVar var = ObsVar::T;
  std::size_t n_levels = 1;  // 1 for PS (surface field)
};

// Flat layout of a multi-variable gridded state:
// [variable][level][lat][lon], row-major.
struct StateLayout {
  GridSpec grid;
  std::vector<VarDef> vars;

  std::size_t size() const;
  std::size_t var_offset(std::size_t v) const;
  std::size_t index(std::size_t v, std::size_t level, std::size_t j_lat,
                    std::size_t i_lon) const;
  // Index of a variable in vars, or npos.
  std::size_t find_var(ObsVar var) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct EnsembleState {
  StateLayout layout;
  Eigen::MatrixXd members;  // size x k, one column per member

  std::size_t ensemble_size() const {
    return static_cast<std::size_t>(members.cols());
  }
  Eigen::VectorXd mean() const { return members.rowwise().mean(); }
  Eigen::MatrixXd perturbations() const {
    return members.colwise() - members.rowwise().mean().eval();
  }
};

struct ObserveResult {
  double value = 0.0;
  bool clamped = false;  // obs pressure outside the model level range
};

// Observation operator: bilinear in lat/lon (periodic longitude, clamped
// latitude), linear in ln p between adjacent levels; PS is interpolated
// horizontally from the surface-pressure field.
ObserveResult observe(const StateLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state,
                      const GeoPoint& point, ObsVar variable);

// Gridded state file: JSON sidecar header at <path>.json plus raw
// little-endian float32 raster at <path>.bin in layout order.
void write_state_file(const std::string& path_base, const StateLayout& layout,
                      const Eigen::Ref<const Eigen::VectorXd>& state,
                      std::int64_t time);
struct StateFile {
  StateLayout layout;
  Eigen::VectorXd state;
  std::int64_t time = 0;
};
StateFile read_state_file(const std::string& path_base);

// Ring (Lorenz-96) state files: one float64 per line, full precision.
void write_ring_state(const std::string& path,
                      const Eigen::Ref<const Eigen::VectorXd>& state);
Eigen::VectorXd read_ring_state(const std::string& path);

}  // namespace enda
