#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dfmkit/state_space.hpp"

namespace dfmkit {

// Truncated MA(infinity) representation
//   c_t = c_ss + sum_{j < H} Psi_j eps_{t-j},  eps ~ N(0, I_r)
struct MARepresentation {
  std::vector<Eigen::MatrixXd> Psi;  // H matrices, each M x r
  Eigen::VectorXd c_ss;              // length M

  int H() const { return static_cast<int>(Psi.size()); }
  int M() const { return Psi.empty() ? 0 : static_cast<int>(Psi[0].rows()); }
  int r() const { return Psi.empty() ? 0 : static_cast<int>(Psi[0].cols()); }

  // True when the tail coefficient norm is not negligible relative to the
  // peak, i.e. the truncation horizon is likely too short.
  bool truncation_suspect() const;
};

struct ShockSpec {
  std::string name;
  std::optional<double> rho;  // AR(1) coefficient with unit impact
};

// Externally supplied sequence-space objects. For each aggregate input p
// the consumption gradients J^c_p (M x H) must be present, together with
// either a direct IRF matrix I^p_e (H x r) or, per shock x, a GE Jacobian
// J^p_x (H x H) combined with the shock's AR(1) coefficient.
struct JacobianSet {
  int H = 0;
  int M = 0;
  std::vector<std::string> inputs;
  std::vector<ShockSpec> shocks;
  std::map<std::string, Eigen::MatrixXd> consumption_jac;        // p -> M x H
  std::map<std::string, Eigen::MatrixXd> input_irf;              // p -> H x r
  std::map<std::pair<std::string, std::string>, Eigen::MatrixXd> ge_jac;
};

// Rows shifted up by j with zero padding at the bottom.
Eigen::MatrixXd shift_forward(const Eigen::MatrixXd& X, int j);

// (1, rho, rho^2, ..., rho^{H-1})
Eigen::VectorXd ar1_irf(double rho, int H);

// Psi_j = sum_p J^c_p F^j I^p_e, with IRFs built from GE Jacobians and
// AR(1) coefficients where not supplied directly.
MARepresentation assemble_ma(const JacobianSet& jac, int H);

// Simulation with a stationary start (pre-sample shocks drawn, not
// zero-padded) and measurement noise at a fixed standard deviation.
PanelData simulate_ma_panel(const MARepresentation& ma, int T,
                            std::uint64_t seed, double sigma_v);

// Measurement-error calibration: sigma_v^2 = share/(1-share) times the
// cross-sectional average of per-row sample variances of the noiseless
// panel.
PanelData simulate_micro_panel(const MARepresentation& ma, int T,
                               std::uint64_t seed, double meas_error_share);

// ||F J - J F||_F / ||F J||_F with F the shift-forward matrix.
double commutability_slackness(const Eigen::MatrixXd& J);

}  // namespace dfmkit
