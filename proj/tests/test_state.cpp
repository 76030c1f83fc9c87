#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "state.hpp"

using namespace enda;

namespace {

StateLayout small_layout() {
  StateLayout layout;
  layout.grid = GridSpec::regular(8, 4, {1000.0, 500.0, 100.0});
  layout.vars = {{ObsVar::T, 3}, {ObsVar::PS, 1}};
  return layout;
}

std::string temp_base(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("layout indexing") {
  const StateLayout layout = small_layout();
  CHECK(layout.size() == 3 * 32 + 32);
  CHECK(layout.var_offset(0) == 0);
  CHECK(layout.var_offset(1) == 96);
  // [var][level][lat][lon] ordering.
  CHECK(layout.index(0, 0, 0, 0) == 0);
  CHECK(layout.index(0, 0, 0, 1) == 1);
  CHECK(layout.index(0, 0, 1, 0) == 8);
  CHECK(layout.index(0, 1, 0, 0) == 32);
  CHECK(layout.index(1, 0, 2, 3) == 96 + 19);
  CHECK(layout.find_var(ObsVar::PS) == 1);
  CHECK(layout.find_var(ObsVar::U) == StateLayout::npos);
}

TEST_CASE("ensemble mean and perturbations") {
  EnsembleState ens;
  ens.layout = small_layout();
  ens.members.resize(2, 3);
  ens.members << 1, 2, 3, 10, 20, 30;
  CHECK(ens.ensemble_size() == 3);
  CHECK(ens.mean()[0] == doctest::Approx(2.0));
  CHECK(ens.mean()[1] == doctest::Approx(20.0));
  const Eigen::MatrixXd pert = ens.perturbations();
  CHECK(pert.row(0).sum() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(pert(0, 0) == doctest::Approx(-1.0));
}

TEST_CASE("observation operator reproduces bilinear fields") {
  const StateLayout layout = small_layout();
  const auto& g = layout.grid;
  Eigen::VectorXd state = Eigen::VectorXd::Zero(layout.size());
  // T linear in lat and lon degrees at every level; linear functions are
  // reproduced exactly by bilinear interpolation inside a cell.
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t j = 0; j < g.n_lat; ++j)
      for (std::size_t i = 0; i < g.n_lon; ++i)
        state[layout.index(0, l, j, i)] =
            2.0 * g.lat_deg[j] + 0.5 * g.lon_deg[i] + 100.0 * double(l);
  for (std::size_t j = 0; j < g.n_lat; ++j)
    for (std::size_t i = 0; i < g.n_lon; ++i)
      state[layout.index(1, 0, j, i)] = 1000.0 + g.lat_deg[j];

  GeoPoint p{10.0, 30.0, 1000.0};
  const auto r = observe(layout, state, p, ObsVar::T);
  CHECK_FALSE(r.clamped);
  CHECK(r.value == doctest::Approx(2.0 * 10.0 + 0.5 * 30.0).epsilon(1e-13));
  // PS needs no pressure and interpolates the surface plane.
  const auto ps = observe(layout, state, {10.0, 30.0, {}}, ObsVar::PS);
  CHECK(ps.value == doctest::Approx(1010.0).epsilon(1e-13));
}

TEST_CASE("observation operator is linear in ln p") {
  const StateLayout layout = small_layout();
  Eigen::VectorXd state = Eigen::VectorXd::Zero(layout.size());
  // Value = a + b ln p, constant horizontally.
  const double a = 3.0, b = -7.0;
  const auto& levels = layout.grid.levels_hpa;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t c = 0; c < 32; ++c)
      state[l * 32 + c] = a + b * std::log(levels[l]);
  for (double p : {850.0, 700.0, 250.0, 120.0}) {
    const auto r = observe(layout, state, {0.0, 0.0, p}, ObsVar::T);
    CHECK_FALSE(r.clamped);
    CHECK(r.value == doctest::Approx(a + b * std::log(p)).epsilon(1e-12));
  }
  // Exact at the levels themselves.
  CHECK(observe(layout, state, {0.0, 0.0, 500.0}, ObsVar::T).value ==
        doctest::Approx(a + b * std::log(500.0)).epsilon(1e-13));
}

TEST_CASE("observation operator clamps outside the column") {
  const StateLayout layout = small_layout();
  Eigen::VectorXd state = Eigen::VectorXd::Zero(layout.size());
  for (std::size_t c = 0; c < 32; ++c) {
    state[0 * 32 + c] = 11.0;  // 1000 hPa
    state[2 * 32 + c] = 22.0;  // 100 hPa
  }
  auto below = observe(layout, state, {0.0, 0.0, 1013.0}, ObsVar::T);
  CHECK(below.clamped);
  CHECK(below.value == doctest::Approx(11.0));
  auto above = observe(layout, state, {0.0, 0.0, 10.0}, ObsVar::T);
  CHECK(above.clamped);
  CHECK(above.value == doctest::Approx(22.0));
  CHECK_FALSE(observe(layout, state, {0.0, 0.0, 1000.0}, ObsVar::T).clamped);
  CHECK_THROWS_AS(observe(layout, state, {0.0, 0.0, {}}, ObsVar::T),
                  std::invalid_argument);
  CHECK_THROWS_AS(observe(layout, state, {0.0, 0.0, 500.0}, ObsVar::U),
                  std::invalid_argument);
}

TEST_CASE("observation operator wraps longitude and clamps latitude") {
  const StateLayout layout = small_layout();
  const auto& g = layout.grid;
  Eigen::VectorXd state = Eigen::VectorXd::Zero(layout.size());
  // Surface plane keyed by longitude cell index.
  for (std::size_t j = 0; j < g.n_lat; ++j)
    for (std::size_t i = 0; i < g.n_lon; ++i)
      state[layout.index(1, 0, j, i)] = double(i);
  // Midway between the last cell (315 deg, value 7) and the wrapped
  // first cell (0 deg, value 0).
  const auto wrap = observe(layout, state, {0.0, 337.5, {}}, ObsVar::PS);
  CHECK(wrap.value == doctest::Approx(3.5).epsilon(1e-13));
  // Poleward of the last row: uses the edge row (no extrapolation).
  for (std::size_t i = 0; i < g.n_lon; ++i)
    state[layout.index(1, 0, g.n_lat - 1, i)] = 99.0;
  const auto polar = observe(layout, state, {89.0, 10.0, {}}, ObsVar::PS);
  CHECK(polar.value == doctest::Approx(99.0).epsilon(1e-13));
}

TEST_CASE("gridded state file round trip") {
  const StateLayout layout = small_layout();
  Eigen::VectorXd state(layout.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    state[i] = std::sin(0.1 * double(i)) * 100.0;
  const std::string base = temp_base("enda_state_rt");
  write_state_file(base, layout, state, 86400);
  const StateFile back = read_state_file(base);
  CHECK(back.time == 86400);
  CHECK(back.layout.size() == layout.size());
  CHECK(back.layout.grid.n_lon == 8);
  CHECK(back.layout.vars.size() == 2);
  CHECK(back.layout.vars[0].var == ObsVar::T);
  REQUIRE(back.state.size() == state.size());
  for (Eigen::Index i = 0; i < state.size(); ++i)
    CHECK(back.state[i] ==
          doctest::Approx(state[i]).epsilon(1e-6));  // float32 raster
  std::filesystem::remove(base + ".json");
  std::filesystem::remove(base + ".bin");
}

TEST_CASE("state file errors") {
  const StateLayout layout = small_layout();
  CHECK_THROWS_AS(
      write_state_file(temp_base("enda_state_bad"), layout,
                       Eigen::VectorXd::Zero(3), 0),
      std::invalid_argument);
  CHECK_THROWS_AS(read_state_file(temp_base("enda_state_missing")),
                  std::runtime_error);
  // Truncated raster.
  const std::string base = temp_base("enda_state_trunc");
  write_state_file(base, layout, Eigen::VectorXd::Zero(layout.size()), 0);
  std::filesystem::resize_file(base + ".bin", 10);
  CHECK_THROWS_WITH_AS(read_state_file(base), doctest::Contains("truncated"),
                       std::runtime_error);
  std::filesystem::remove(base + ".json");
  std::filesystem::remove(base + ".bin");
}

TEST_CASE("ring state file round trip is lossless") {
  Eigen::VectorXd x(5);
  x << 1.0, -2.25, 3.141592653589793, 1e-17, 8.000000000000002;
  const std::string path = temp_base("enda_ring_rt.txt");
  write_ring_state(path, x);
  const Eigen::VectorXd back = read_ring_state(path);
  REQUIRE(back.size() == 5);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(back[i] == x[i]);
  std::filesystem::remove(path);
}
