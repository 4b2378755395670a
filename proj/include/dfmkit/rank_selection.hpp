#pragma once

#include <map>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "dfmkit/dmd.hpp"

namespace dfmkit {

struct GavishDonohoThreshold {
  double tau = 0.0;     // singular-value cutoff lambda(beta) * sqrt(T) * sigma
  double lambda = 0.0;  // lambda(beta)
  double beta = 0.0;
  bool outside_regime = false;  // beta > 1: computed with M and T swapped
};

struct RankSelectionConfig {
  double plateau_tol = 0.005;  // R^2 gap below which the curve has flattened
  std::optional<double> gd_sigma;    // noise level for the threshold rule;
                                     // estimated from the spectrum if absent
  std::optional<double> shrinkage;   // forwarded to dmd_fit
};

struct RankReport {
  Eigen::VectorXd singular_values;  // top n_max, descending
  GavishDonohoThreshold gd;
  int gd_rank = 0;
  std::map<int, double> ic_values;
  std::map<int, double> r2_values;
  std::map<int, double> autocov_values;
  int chosen_N = 0;
  std::string rationale;
};

Eigen::VectorXd singular_spectrum(const Eigen::MatrixXd& Y, int n_max);

// lambda(beta) = sqrt(2(beta+1) + 8 beta / (beta+1 + sqrt(beta^2+14 beta+1)))
double gavish_donoho_lambda(double beta);
GavishDonohoThreshold gavish_donoho(int M, int T, double sigma);

// IC(n) = V(n) + n ((M+T)/(MT)) log(MT/(M+T)), V(n) the mean squared
// residual; T is the residual sample length.
std::map<int, double> bai_ng_ic(
    const std::map<int, Eigen::MatrixXd>& residuals_by_rank, int M, int T);

// Weighted cross-sectional R^2 of each fit applied to the panel. Weights
// default to equal; when given they are normalized to sum to M. Rows with
// zero variance get R^2 = 0.
std::map<int, double> aggregate_r2(
    const Eigen::MatrixXd& panel, const std::map<int, ReducedVAR>& fits,
    const std::optional<Eigen::VectorXd>& weights = std::nullopt);

// Max-abs entry of (1/L) sum_t a_{t+1} a_t^T.
double residual_autocov(const Eigen::MatrixXd& residuals);
Eigen::MatrixXd residual_autocov_matrix(const Eigen::MatrixXd& residuals);

// Runs every diagnostic over n = 1..n_max sharing one SVD and picks N by
// the R^2 plateau rule, with the IC argmin and threshold count reported as
// cross-checks. chosen_N = 0 flags a panel with no factor structure.
RankReport select_rank(const PanelData& panel, int n_max,
                       const RankSelectionConfig& config = {});
RankReport select_rank(const Eigen::MatrixXd& Y, int n_max,
                       const RankSelectionConfig& config = {});

}  // namespace dfmkit
