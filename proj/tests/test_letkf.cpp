#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "letkf.hpp"
#include "rng.hpp"

using namespace enda;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              std::uint64_t seed) {
  const CounterRng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = rng.normal(std::uint64_t(i), std::uint64_t(j));
  return m;
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& members) {
  const Eigen::MatrixXd pert =
      members.colwise() - members.rowwise().mean().eval();
  return pert * pert.transpose() / double(members.cols() - 1);
}

}  // namespace

TEST_CASE("relaxation parsing") {
  CHECK(parse_relaxation("none") == Relaxation::None);
  CHECK(parse_relaxation("rtps") == Relaxation::RTPS);
  CHECK(parse_relaxation("rtpp") == Relaxation::RTPP);
  CHECK_THROWS_AS(parse_relaxation("other"), std::invalid_argument);
  CHECK(std::string(relaxation_name(Relaxation::RTPS)) == "rtps");
}

TEST_CASE("config validation") {
  DaConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.ensemble_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DaConfig{};
  cfg.rho_h_km = -5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = DaConfig{};
  cfg.relaxation = Relaxation::RTPP;
  cfg.alpha = 1.5;  // RTPP blend must stay within [0, 1]
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.relaxation = Relaxation::RTPS;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("localization weight and gross error check") {
  CHECK(localization_weight(0, 0, 600, 0.1) == 1.0);
  CHECK(localization_weight(600, 0, 600, 0.1) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK(localization_weight(kCutoffFactor * 600, 0, 600, 0.1) == 0.0);
  CHECK(gross_error_check(9.99, 1.0, 10.0));
  CHECK(gross_error_check(10.0, 1.0, 10.0));  // boundary retained
  CHECK_FALSE(gross_error_check(10.01, 1.0, 10.0));
  CHECK(gross_error_check(-10.0, 1.0, 10.0));
  CHECK_FALSE(gross_error_check(-10.5, 1.0, 10.0));
}

TEST_CASE("scalar Kalman oracle over 1000 random instances") {
  const CounterRng rng(314);
  const std::size_t k = 12;
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::MatrixXd bg(1, k);
    for (std::size_t m = 0; m < k; ++m)
      bg(0, m) = 5.0 * rng.normal(trial, m, 0);
    const double y = 5.0 * rng.normal(trial, 0, 1);
    const double r_std = 0.3 + 2.0 * rng.uniform(trial, 0, 2);

    std::vector<RingObs> obs{{0, y, r_std}};
    DaConfig cfg;
    cfg.ensemble_size = k;
    cfg.ring_rho_intervals = 0.0;  // no localization
    cfg.relaxation = Relaxation::None;
    const Eigen::MatrixXd an = letkf_analysis_ring(bg, obs, cfg);

    const double xb = bg.row(0).mean();
    const double sb2 =
        (bg.row(0).array() - xb).square().sum() / double(k - 1);
    const double r2 = r_std * r_std;
    const double expect = xb + sb2 / (sb2 + r2) * (y - xb);
    CHECK(an.row(0).mean() == doctest::Approx(expect).epsilon(1e-8));
    // Posterior variance contracts to sb2 * r2 / (sb2 + r2).
    const double sa2 = (an.row(0).array() - an.row(0).mean())
                           .square()
                           .sum() /
                       double(k - 1);
    CHECK(sa2 == doctest::Approx(sb2 * r2 / (sb2 + r2)).epsilon(1e-8));
  }
}

TEST_CASE("matches a full Kalman filter on a 5-dimensional instance") {
  const Eigen::Index n = 5;
  const std::size_t k = 40;
  Eigen::MatrixXd bg = random_matrix(n, Eigen::Index(k), 21);
  bg.row(1) *= 3.0;
  bg.row(3).array() += 2.0;

  const CounterRng rng(22);
  std::vector<RingObs> obs;
  Eigen::VectorXd y(n), rvar(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = rng.normal(std::uint64_t(i), 0);
    const double rs = 0.5 + rng.uniform(std::uint64_t(i), 1);
    rvar[i] = rs * rs;
    obs.push_back({std::size_t(i), y[i], rs});
  }

  DaConfig cfg;
  cfg.ensemble_size = k;
  cfg.ring_rho_intervals = 0.0;
  cfg.relaxation = Relaxation::None;
  const Eigen::MatrixXd an = letkf_analysis_ring(bg, obs, cfg);

  // Full-rank Kalman oracle with H = I.
  const Eigen::MatrixXd pb = sample_cov(bg);
  const Eigen::MatrixXd kal =
      pb * (pb + Eigen::MatrixXd(rvar.asDiagonal())).inverse();
  const Eigen::VectorXd xb = bg.rowwise().mean();
  const Eigen::VectorXd xa = xb + kal * (y - xb);
  const Eigen::MatrixXd pa = (Eigen::MatrixXd::Identity(n, n) - kal) * pb;

  const Eigen::VectorXd an_mean = an.rowwise().mean();
  const Eigen::MatrixXd an_cov = sample_cov(an);
  CHECK((an_mean - xa).norm() / xa.norm() < 1e-8);
  CHECK((an_cov - pa).norm() / pa.norm() < 1e-8);
}

TEST_CASE("letkf_solve degenerate inputs") {
  // No observations at all: weights vanish and the transform is the
  // identity-spread square root sqrt of P_a scaled, i.e. I.
  const std::size_t k = 6;
  LetkfSolution sol = letkf_solve(Eigen::MatrixXd::Zero(0, k),
                                  Eigen::VectorXd::Zero(0),
                                  Eigen::VectorXd::Zero(0),
                                  Eigen::VectorXd::Zero(0));
  CHECK(sol.mean_weights.norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((sol.transform - Eigen::MatrixXd::Identity(k, k)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
  // Zero localization weight is equivalent to no observation.
  Eigen::MatrixXd yp = random_matrix(1, k, 5);
  yp.array() -= yp.mean();
  LetkfSolution zero = letkf_solve(yp, Eigen::VectorXd::Constant(1, 1.0),
                                   Eigen::VectorXd::Constant(1, 1.0),
                                   Eigen::VectorXd::Constant(1, 0.0));
  CHECK(zero.mean_weights.norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((zero.transform - Eigen::MatrixXd::Identity(k, k)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("R-localization downweights distant observations") {
  // A localized obs (weight 0.5) must pull the mean less than a fully
  // weighted one.
  const std::size_t k = 10;
  Eigen::MatrixXd bg = random_matrix(1, Eigen::Index(k), 77);
  const Eigen::MatrixXd pert =
      bg.colwise() - bg.rowwise().mean().eval();
  const Eigen::VectorXd innov = Eigen::VectorXd::Constant(1, 2.0);
  const Eigen::VectorXd rvar = Eigen::VectorXd::Constant(1, 1.0);
  const auto full = letkf_solve(pert, innov, rvar, Eigen::VectorXd::Constant(1, 1.0));
  const auto half = letkf_solve(pert, innov, rvar, Eigen::VectorXd::Constant(1, 0.5));
  const double shift_full = (pert * full.mean_weights).cwiseAbs()(0);
  const double shift_half = (pert * half.mean_weights).cwiseAbs()(0);
  CHECK(shift_half < shift_full);
  CHECK(shift_half > 0.0);
  // Halving the weight equals doubling the obs error variance.
  const auto doubled = letkf_solve(pert, innov, 2.0 * rvar,
                                   Eigen::VectorXd::Constant(1, 1.0));
  CHECK((half.mean_weights - doubled.mean_weights).norm() < 1e-12);
  CHECK((half.transform - doubled.transform).norm() < 1e-12);
}

TEST_CASE("RTPS restores the blended standard deviation") {
  const Eigen::Index n = 30;
  const std::size_t k = 8;
  const Eigen::MatrixXd bg = random_matrix(n, Eigen::Index(k), 1);
  Eigen::MatrixXd an = random_matrix(n, Eigen::Index(k), 2) * 0.3;
  an.rowwise() += Eigen::RowVectorXd::Constant(Eigen::Index(k), 1.5);

  for (double alpha : {0.0, 0.5, 1.0, 1.2, 1.3}) {
    const Eigen::MatrixXd rel = relax_rtps(an, bg, alpha);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sb = std::sqrt(
          (bg.row(i).array() - bg.row(i).mean()).square().sum() / double(k - 1));
      const double sa = std::sqrt(
          (an.row(i).array() - an.row(i).mean()).square().sum() / double(k - 1));
      const double sr = std::sqrt(
          (rel.row(i).array() - rel.row(i).mean()).square().sum() /
          double(k - 1));
      CHECK(sr == doctest::Approx((1 - alpha) * sa + alpha * sb).epsilon(1e-10));
      CHECK(rel.row(i).mean() == doctest::Approx(an.row(i).mean()).epsilon(1e-12));
    }
  }
}

TEST_CASE("RTPP blends perturbations memberwise") {
  const Eigen::Index n = 20;
  const std::size_t k = 6;
  const Eigen::MatrixXd bg = random_matrix(n, Eigen::Index(k), 3);
  const Eigen::MatrixXd an = random_matrix(n, Eigen::Index(k), 4) * 0.5;
  const Eigen::MatrixXd pb = bg.colwise() - bg.rowwise().mean().eval();
  const Eigen::MatrixXd pa = an.colwise() - an.rowwise().mean().eval();

  for (double alpha : {0.0, 0.9, 1.0}) {
    const Eigen::MatrixXd rel = relax_rtpp(an, bg, alpha);
    const Eigen::MatrixXd pr = rel.colwise() - rel.rowwise().mean().eval();
    const Eigen::MatrixXd expect = (1 - alpha) * pa + alpha * pb;
    CHECK((pr - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rel.rowwise().mean() - an.rowwise().mean()).cwiseAbs().maxCoeff() <
          1e-12);
  }
  CHECK_THROWS_AS(relax_rtpp(an, bg, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(relax_rtpp(an, bg, -0.1), std::invalid_argument);
}

TEST_CASE("apply_relaxation dispatches on the config") {
  const Eigen::MatrixXd bg = random_matrix(4, 5, 6);
  const Eigen::MatrixXd an = random_matrix(4, 5, 7) * 0.2;
  DaConfig cfg;
  cfg.relaxation = Relaxation::None;
  CHECK((apply_relaxation(an, bg, cfg) - an).norm() == 0.0);
  cfg.relaxation = Relaxation::RTPP;
  cfg.alpha = 0.9;
  CHECK((apply_relaxation(an, bg, cfg) - relax_rtpp(an, bg, 0.9)).norm() == 0.0);
  cfg.relaxation = Relaxation::RTPS;
  cfg.alpha = 1.2;
  CHECK((apply_relaxation(an, bg, cfg) - relax_rtps(an, bg, 1.2)).norm() == 0.0);
}

TEST_CASE("ring analysis with no observations keeps the background") {
  const Eigen::MatrixXd bg = random_matrix(8, 6, 9);
  DaConfig cfg;
  cfg.ensemble_size = 6;
  const Eigen::MatrixXd an = letkf_analysis_ring(bg, {}, cfg);
  CHECK((an - bg).norm() == 0.0);
}

TEST_CASE("ring localization confines the update") {
  // Single obs at index 0, tight localization: far side of the ring
  // must remain at its background values.
  const Eigen::Index n = 40;
  const std::size_t k = 10;
  const Eigen::MatrixXd bg = random_matrix(n, Eigen::Index(k), 33);
  DaConfig cfg;
  cfg.ensemble_size = k;
  cfg.ring_rho_intervals = 2.0;
  cfg.relaxation = Relaxation::None;
  const Eigen::MatrixXd an = letkf_analysis_ring(bg, {{0, 1.0, 0.5}}, cfg);
  // Index 20 is far beyond the sqrt(10/3)*2 cutoff.
  CHECK((an.row(20) - bg.row(20)).norm() == 0.0);
  CHECK((an.row(10) - bg.row(10)).norm() == 0.0);
  CHECK((an.row(0) - bg.row(0)).norm() > 0.0);
  // Cyclic distance: index 39 is one interval away and gets updated.
  CHECK((an.row(39) - bg.row(39)).norm() > 0.0);
}

TEST_CASE("gridded analysis leaves unobserved regions untouched") {
  StateLayout layout;
  layout.grid = GridSpec::regular(32, 16, {850.0, 500.0});
  layout.vars = {{ObsVar::T, 2}, {ObsVar::PS, 1}};
  EnsembleState bg;
  bg.layout = layout;
  bg.members = random_matrix(Eigen::Index(layout.size()), 8, 55);
  bg.members.bottomRows(Eigen::Index(layout.grid.n_columns())).array() += 1000.0;

  Observation o;
  o.position = {0.0, 0.0, 500.0};
  o.variable = ObsVar::T;
  o.value = 1.0;
  o.error_std = 1.0;

  DaConfig cfg;
  cfg.ensemble_size = 8;
  cfg.relaxation = Relaxation::None;
  AnalysisDiagnostics diag;
  const EnsembleState an = letkf_analysis(bg, {o}, cfg, &diag);
  CHECK(diag.points_total == layout.size());  // one point per row
  CHECK(diag.points_with_obs > 0);
  CHECK(diag.points_with_obs < diag.points_total);

  // Antipodal column: outside the 600 km localization cutoff entirely.
  bool far_same = true;
  for (std::size_t v = 0; v < layout.vars.size(); ++v)
    for (std::size_t l = 0; l < layout.vars[v].n_levels; ++l) {
      const auto idx = Eigen::Index(layout.index(v, l, 8, 16));
      if ((an.members.row(idx) - bg.members.row(idx)).norm() != 0.0)
        far_same = false;
    }
  CHECK(far_same);
  // Column at (-5.625, 0): about 625 km from the obs, inside the taper.
  const auto near_idx = Eigen::Index(layout.index(0, 1, 7, 0));
  CHECK((an.members.row(near_idx) - bg.members.row(near_idx)).norm() > 0.0);

  // Determinism across repeated calls.
  const EnsembleState an2 = letkf_analysis(bg, {o}, cfg);
  CHECK((an.members - an2.members).norm() == 0.0);

  // No observations: exact passthrough.
  const EnsembleState none = letkf_analysis(bg, {}, cfg);
  CHECK((none.members - bg.members).norm() == 0.0);
}

TEST_CASE("obs-space evaluation and gross-error filtering") {
  StateLayout layout;
  layout.grid = GridSpec::regular(16, 8, {850.0, 500.0});
  layout.vars = {{ObsVar::T, 2}};
  EnsembleState bg;
  bg.layout = layout;
  bg.members = Eigen::MatrixXd::Constant(Eigen::Index(layout.size()), 4, 280.0);

  std::vector<Observation> obs(2);
  obs[0].position = {10.0, 10.0, 700.0};
  obs[0].variable = ObsVar::T;
  obs[0].value = 281.0;  // departure 1.0
  obs[0].error_std = 1.0;
  obs[1] = obs[0];
  obs[1].value = 300.0;  // departure 20 > 10 sigma

  const auto eval = evaluate_obs(bg, obs);
  CHECK(eval.mean_equiv[0] == doctest::Approx(280.0).epsilon(1e-13));
  CHECK(eval.member_equiv.rows() == 2);
  CHECK(eval.member_equiv.cols() == 4);

  std::vector<std::size_t> accepted;
  const auto records = gross_error_filter(obs, eval, 10.0, accepted);
  REQUIRE(records.size() == 2);
  CHECK(records[0].accepted);
  CHECK(records[0].departure == doctest::Approx(1.0).epsilon(1e-13));
  CHECK_FALSE(records[1].accepted);
  CHECK(accepted == std::vector<std::size_t>{0});

  // Innovation CSV: header on truncate, rows on append.
  const auto path =
      (std::filesystem::temp_directory_path() / "enda_innov.csv").string();
  write_innovation_records(records, 3, path, false);
  write_innovation_records(records, 4, path, true);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  bool has_header = false;
  while (std::getline(in, line)) {
    if (lines == 0 && line.find("cycle") != std::string::npos) has_header = true;
    ++lines;
  }
  CHECK(has_header);
  CHECK(lines == 5);
  std::filesystem::remove(path);
}
