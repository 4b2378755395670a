#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "dfmkit/errors.hpp"

namespace dfmkit {

// Linear-Gaussian dynamic factor model
//   x_{t+1} = A x_t + C w_{t+1},  w ~ N(0, I_N)
//   y_t     = G x_t + v_t,        v ~ N(0, sigma_v^2 I_M)
struct StateSpaceModel {
  Eigen::MatrixXd A;  // N x N
  Eigen::MatrixXd C;  // N x N
  Eigen::MatrixXd G;  // M x N
  double sigma_v = 0.0;

  StateSpaceModel() = default;
  StateSpaceModel(Eigen::MatrixXd A_, Eigen::MatrixXd C_, Eigen::MatrixXd G_,
                  double sigma_v_);

  int N() const { return static_cast<int>(A.rows()); }
  int M() const { return static_cast<int>(G.rows()); }

  double spectral_radius() const;
  bool is_stationary() const { return spectral_radius() < 1.0; }
  // Theory-side conditions (full column rank of G and A, M >= N); simulation
  // and filtering work for degenerate cases too, so these are advisory.
  bool satisfies_rank_conditions(double rank_tol = 1e-10) const;
};

// Steady-state filtering objects of the innovations representation.
struct InnovationsForm {
  Eigen::MatrixXd K;          // N x M steady-state Kalman gain
  Eigen::MatrixXd Sigma_inf;  // N x N one-step forecast-error covariance
  Eigen::MatrixXd Omega;      // M x M innovation covariance G Sigma G^T + R
  Eigen::MatrixXd B1;         // M x M first VAR coefficient, G K
  double riccati_residual = 0.0;
};

struct PanelData {
  Eigen::MatrixXd Y;  // M x T, columns are time points
  std::uint64_t seed = 0;
  int burn_in = 0;
  std::optional<Eigen::MatrixXd> latent;  // N x T when requested

  int M() const { return static_cast<int>(Y.rows()); }
  int T() const { return static_cast<int>(Y.cols()); }
};

// Fixed-point iteration on
//   Sigma = A Sigma A^T + C C^T - A Sigma G^T (G Sigma G^T + R)^{-1} G Sigma A^T
// from Sigma_0 = C C^T until the max-abs elementwise change <= tol.
InnovationsForm solve_riccati(const StateSpaceModel& model, double tol = 1e-12,
                              int max_iter = 1000000);

// Fixed point of P = A P A^T + C C^T (stationary state covariance).
Eigen::MatrixXd stationary_state_cov(const StateSpaceModel& model,
                                     double tol = 1e-12,
                                     int max_iter = 1000000);

// B_j = G (A - K G)^{j-1} K, j >= 1.
Eigen::MatrixXd var_coefficient(const StateSpaceModel& model,
                                const InnovationsForm& innov, int j);

PanelData simulate_dfm(const StateSpaceModel& model, int T, int burn_in,
                       std::uint64_t seed, bool keep_latent = false);

// Exact Gaussian log-likelihood via the time-varying Kalman filter,
// initialized at x0 = 0 with the stationary Lyapunov covariance.
double kalman_loglik(const StateSpaceModel& model, const PanelData& panel);

// First-order VAR likelihood with coefficients from the innovations form.
double var1_loglik(const StateSpaceModel& model, const InnovationsForm& innov,
                   const PanelData& panel);

}  // namespace dfmkit
