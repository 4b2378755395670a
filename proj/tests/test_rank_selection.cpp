#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dfmkit/dmd.hpp"
#include "dfmkit/rank_selection.hpp"
#include "dfmkit/rng.hpp"
#include "dfmkit/state_space.hpp"

using namespace dfmkit;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  GaussianStream gs(seed, 3);
  MatrixXd X(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) X(i, j) = gs.next();
  return X;
}

StateSpaceModel synthetic_dfm(int N, int M, std::uint64_t seed,
                              double sigma_v) {
  GaussianStream gs(seed, 17);
  MatrixXd A = MatrixXd::Zero(N, N), C = MatrixXd::Zero(N, N), G(M, N);
  for (int i = 0; i < N; ++i) {
    A(i, i) = 0.5 + 0.35 * i / std::max(1, N - 1);
    C(i, i) = 1.0 + 0.5 * (N - 1 - i);
  }
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) G(i, j) = gs.next();
  return StateSpaceModel(A, C, G, sigma_v);
}

}  // namespace

TEST_CASE("spectrum: diagonal and rank-1 cases") {
  MatrixXd Y = MatrixXd::Zero(3, 3);
  Y.diagonal() << 3.0, 2.0, 1.0;
  VectorXd s = singular_spectrum(Y, 3);
  CHECK(s(0) == doctest::Approx(3.0));
  CHECK(s(1) == doctest::Approx(2.0));
  CHECK(s(2) == doctest::Approx(1.0));

  MatrixXd R = random_matrix(5, 1, 1) * random_matrix(7, 1, 2).transpose();
  VectorXd sr = singular_spectrum(R, 4);
  CHECK(sr(0) > 0.0);
  for (int i = 1; i < 4; ++i) CHECK(sr(i) <= 1e-10 * sr(0));
}

TEST_CASE("spectrum: two-factor panel has exactly two dominant values") {
  StateSpaceModel m = synthetic_dfm(2, 60, 3, 0.01);
  PanelData p = simulate_dfm(m, 800, 200, 4);
  MatrixXd Y = p.Y;
  Y.colwise() -= Y.rowwise().mean();
  VectorXd s = singular_spectrum(Y, 5);
  CHECK(s(1) > 10.0 * s(2));
}

TEST_CASE("threshold: closed-form values") {
  CHECK(gavish_donoho_lambda(1e-12) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  CHECK(gavish_donoho_lambda(1.0) == doctest::Approx(2.309401).epsilon(1e-6));

  // independent re-implementation of the closed form at beta = 0.03
  const double beta = 300.0 / 10000.0;
  const double inner = beta + 1.0 + std::sqrt(beta * beta + 14.0 * beta + 1.0);
  const double oracle = std::sqrt(2.0 * (beta + 1.0) + 8.0 * beta / inner);
  CHECK(gavish_donoho_lambda(beta) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("threshold: tau scales with sqrt(T) sigma; beta > 1 is flagged") {
  GavishDonohoThreshold t = gavish_donoho(300, 10000, 0.5);
  CHECK(t.beta == doctest::Approx(0.03));
  CHECK(t.tau ==
        doctest::Approx(gavish_donoho_lambda(0.03) * std::sqrt(10000.0) * 0.5));
  CHECK_FALSE(t.outside_regime);

  GavishDonohoThreshold w = gavish_donoho(200, 100, 1.0);
  CHECK(w.outside_regime);
  CHECK(w.lambda == doctest::Approx(gavish_donoho_lambda(100.0 / 200.0)));
}

TEST_CASE("information criterion: zero residuals leave the penalty only") {
  std::map<int, MatrixXd> resid;
  resid[2] = MatrixXd::Zero(10, 100);
  auto ic = bai_ng_ic(resid, 10, 100);
  const double penalty = 2.0 * (110.0 / 1000.0) * std::log(1000.0 / 110.0);
  CHECK(ic.at(2) == doctest::Approx(penalty).epsilon(1e-12));
}

TEST_CASE("information criterion: constant V makes IC increasing in n") {
  std::map<int, MatrixXd> resid;
  for (int n = 1; n <= 5; ++n) resid[n] = MatrixXd::Ones(6, 50);
  auto ic = bai_ng_ic(resid, 6, 50);
  for (int n = 2; n <= 5; ++n) CHECK(ic.at(n) > ic.at(n - 1));
}

TEST_CASE("information criterion: empty input rejected") {
  std::map<int, MatrixXd> resid;
  CHECK_THROWS_AS(bai_ng_ic(resid, 4, 10), EmptyResiduals);
  resid[1] = MatrixXd(4, 0);
  CHECK_THROWS_AS(bai_ng_ic(resid, 4, 0), EmptyResiduals);
}

TEST_CASE("aggregate R2: perfect fit scores one, null fit scores near zero") {
  // exact decaying dynamics: y_{t+1} = 0.9 y_t from a nonzero start
  const int T = 40;
  MatrixXd Y(2, T);
  Y.col(0) << 1.0, -2.0;
  for (int t = 1; t < T; ++t) Y.col(t) = 0.9 * Y.col(t - 1);
  ReducedVAR perfect;
  perfect.B = 0.9 * MatrixXd::Identity(2, 2);
  perfect.Omega = MatrixXd::Identity(2, 2);
  perfect.N = 2;
  std::map<int, ReducedVAR> fits;
  fits[1] = perfect;
  auto r2 = aggregate_r2(Y, fits);
  CHECK(r2.at(1) == doctest::Approx(1.0).epsilon(1e-12));

  // B = 0 on stationary zero-mean data has no predictive content
  MatrixXd noise = random_matrix(4, 2000, 9);
  ReducedVAR nullfit;
  nullfit.B = MatrixXd::Zero(4, 4);
  nullfit.Omega = MatrixXd::Identity(4, 4);
  nullfit.N = 0;
  fits.clear();
  fits[1] = nullfit;
  CHECK(std::abs(aggregate_r2(noise, fits).at(1)) < 0.05);
}

TEST_CASE("aggregate R2: zero-variance row contributes zero") {
  MatrixXd Y = random_matrix(3, 50, 10);
  Y.row(2).setConstant(4.2);
  ReducedVAR fit;
  fit.B = MatrixXd::Zero(3, 3);
  fit.Omega = MatrixXd::Identity(3, 3);
  std::map<int, ReducedVAR> fits{{1, fit}};
  auto r2 = aggregate_r2(Y, fits);
  CHECK(std::isfinite(r2.at(1)));
  // weights concentrated on the degenerate row pin the aggregate at zero
  VectorXd w = VectorXd::Zero(3);
  w(2) = 1.0;
  CHECK(aggregate_r2(Y, fits, w).at(1) == doctest::Approx(0.0));
}

TEST_CASE("autocovariance: alternating residuals") {
  const int L = 20;
  MatrixXd a = MatrixXd::Zero(3, L);
  for (int t = 0; t < L; ++t) a(1, t) = (t % 2 == 0) ? 1.0 : -1.0;
  CHECK(residual_autocov(a) ==
        doctest::Approx(double(L - 1) / L).epsilon(1e-12));
}

TEST_CASE("autocovariance: white-noise null level") {
  MatrixXd a = random_matrix(10, 10000, 11);
  CHECK(residual_autocov(a) < 5.0 * std::sqrt(1.0 / 10000.0));
}

TEST_CASE("autocovariance: statistic shrinks like 1/sqrt(L)") {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    MatrixXd big = random_matrix(6, 4000, 100 + seed);
    const double r = residual_autocov(big) /
                     residual_autocov(big.leftCols(2000));
    ratios.push_back(r);
  }
  std::nth_element(ratios.begin(), ratios.begin() + 10, ratios.end());
  CHECK(ratios[10] > 0.55);
  CHECK(ratios[10] < 0.85);
}

TEST_CASE("select_rank: exact rank-2 noiseless panel agrees on every "
          "criterion") {
  StateSpaceModel m = synthetic_dfm(2, 30, 12, 0.0);
  PanelData p = simulate_dfm(m, 600, 200, 13);
  p.Y.colwise() -= p.Y.rowwise().mean();
  RankReport rep = select_rank(p, 6);
  CHECK(rep.chosen_N == 2);
  CHECK(rep.gd_rank == 2);
  int ic_argmin = 1;
  for (const auto& [n, v] : rep.ic_values)
    if (v < rep.ic_values.at(ic_argmin)) ic_argmin = n;
  CHECK(ic_argmin == 2);
}

TEST_CASE("select_rank: pure noise panel flags no factor structure") {
  PanelData p;
  p.Y = random_matrix(20, 400, 14);
  RankReport rep = select_rank(p, 5);
  CHECK(rep.chosen_N == 0);
  CHECK(rep.rationale.find("no factor structure") != std::string::npos);
}

TEST_CASE("select_rank: R2 nondecreasing for nested shared-SVD fits") {
  StateSpaceModel m = synthetic_dfm(3, 40, 15, 0.3);
  PanelData p = simulate_dfm(m, 700, 200, 16);
  p.Y.colwise() -= p.Y.rowwise().mean();
  RankReport rep = select_rank(p, 7);
  for (int n = 2; n <= 7; ++n)
    CHECK(rep.r2_values.at(n) >= rep.r2_values.at(n - 1) - 1e-12);
}

TEST_CASE("threshold count nonincreasing in the noise level") {
  StateSpaceModel m = synthetic_dfm(2, 30, 18, 0.2);
  PanelData p = simulate_dfm(m, 500, 200, 19);
  p.Y.colwise() -= p.Y.rowwise().mean();
  int prev = 1 << 20;
  for (double sigma : {0.05, 0.3, 1.0, 5.0}) {
    RankSelectionConfig cfg;
    cfg.gd_sigma = sigma;
    RankReport rep = select_rank(p, 6, cfg);
    CHECK(rep.gd_rank <= prev);
    prev = rep.gd_rank;
  }
}
