#include "dfmkit/ma.hpp"

#include <cmath>

#include "dfmkit/errors.hpp"
#include "dfmkit/rng.hpp"

namespace dfmkit {

bool MARepresentation::truncation_suspect() const {
  if (Psi.empty()) return false;
  double peak = 0.0;
  for (const auto& p : Psi) peak = std::max(peak, p.norm());
  return peak > 0.0 && Psi.back().norm() > 0.01 * peak;
}

Eigen::MatrixXd shift_forward(const Eigen::MatrixXd& X, int j) {
  if (j < 0 || j > X.rows())
    throw std::invalid_argument("shift_forward: j must be in [0, H]");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), X.cols());
  if (j < X.rows()) out.topRows(X.rows() - j) = X.bottomRows(X.rows() - j);
  return out;
}

Eigen::VectorXd ar1_irf(double rho, int H) {
  if (std::abs(rho) >= 1.0)
    throw std::invalid_argument("ar1_irf: |rho| must be < 1");
  if (H < 1) throw std::invalid_argument("ar1_irf: H >= 1 required");
  Eigen::VectorXd irf(H);
  double v = 1.0;
  for (int i = 0; i < H; ++i, v *= rho) irf[i] = v;
  return irf;
}

MARepresentation assemble_ma(const JacobianSet& jac, int H) {
  if (H < 1 || H > jac.H)
    throw InconsistentHorizon("assemble_ma: H must be in [1, jac.H]");
  const int r = static_cast<int>(jac.shocks.size());
  if (r == 0) throw std::invalid_argument("assemble_ma: no shocks");

  // Per-input IRF matrices, H x r.
  std::map<std::string, Eigen::MatrixXd> irf;
  for (const auto& p : jac.inputs) {
    auto jc = jac.consumption_jac.find(p);
    if (jc == jac.consumption_jac.end())
      throw DimensionMismatch("assemble_ma: missing consumption Jacobian for " +
                              p);
    if (jc->second.rows() != jac.M || jc->second.cols() != jac.H)
      throw InconsistentHorizon("assemble_ma: consumption Jacobian for " + p +
                                " is not M x H");
    if (auto it = jac.input_irf.find(p); it != jac.input_irf.end()) {
      if (it->second.rows() != jac.H || it->second.cols() != r)
        throw InconsistentHorizon("assemble_ma: IRF for " + p +
                                  " is not H x r");
      irf[p] = it->second;
    } else {
      Eigen::MatrixXd I_p(jac.H, r);
      for (int k = 0; k < r; ++k) {
        const auto& shock = jac.shocks[k];
        auto ge = jac.ge_jac.find({p, shock.name});
        if (ge == jac.ge_jac.end())
          throw DimensionMismatch("assemble_ma: missing GE Jacobian (" + p +
                                  ", " + shock.name + ")");
        if (ge->second.rows() != jac.H || ge->second.cols() != jac.H)
          throw InconsistentHorizon("assemble_ma: GE Jacobian (" + p + ", " +
                                    shock.name + ") is not H x H");
        if (!shock.rho)
          throw std::invalid_argument("assemble_ma: shock " + shock.name +
                                      " needs rho when IRFs are not supplied");
        I_p.col(k) = ge->second * ar1_irf(*shock.rho, jac.H);
      }
      irf[p] = std::move(I_p);
    }
  }

  MARepresentation ma;
  ma.c_ss = Eigen::VectorXd::Zero(jac.M);
  ma.Psi.reserve(H);
  for (int j = 0; j < H; ++j) {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(jac.M, r);
    for (const auto& p : jac.inputs)
      psi += jac.consumption_jac.at(p).leftCols(jac.H) *
             shift_forward(irf.at(p), j);
    ma.Psi.push_back(std::move(psi));
  }
  return ma;
}

namespace {

Eigen::MatrixXd simulate_ma_noiseless(const MARepresentation& ma, int T,
                                      std::uint64_t seed) {
  const int H = ma.H();
  const int m = ma.M();
  const int r = ma.r();
  if (T < 1) throw std::invalid_argument("simulate_ma_panel: T >= 1");
  if (H < 1) throw std::invalid_argument("simulate_ma_panel: empty MA");

  // Shocks for t = 2-H .. T (stationary start: pre-sample shocks drawn).
  GaussianStream es(seed, 0);
  Eigen::MatrixXd eps(r, T + H - 1);
  for (Eigen::Index c = 0; c < eps.cols(); ++c) {
    for (int i = 0; i < r; ++i) eps(i, c) = es.next();
  }

  Eigen::MatrixXd Y(m, T);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd c = ma.c_ss;
    // eps column index of time t is t + H - 1.
    for (int j = 0; j < H; ++j) c += ma.Psi[j] * eps.col(t + H - 1 - j);
    Y.col(t) = c;
  }
  return Y;
}

}  // namespace

PanelData simulate_ma_panel(const MARepresentation& ma, int T,
                            std::uint64_t seed, double sigma_v) {
  if (sigma_v < 0.0)
    throw std::invalid_argument("simulate_ma_panel: sigma_v >= 0");
  PanelData panel;
  panel.Y = simulate_ma_noiseless(ma, T, seed);
  panel.seed = seed;
  if (sigma_v > 0.0) {
    GaussianStream vs(seed, 1);
    for (Eigen::Index t = 0; t < panel.Y.cols(); ++t)
      for (Eigen::Index i = 0; i < panel.Y.rows(); ++i)
        panel.Y(i, t) += sigma_v * vs.next();
  }
  return panel;
}

PanelData simulate_micro_panel(const MARepresentation& ma, int T,
                               std::uint64_t seed, double meas_error_share) {
  if (meas_error_share < 0.0 || meas_error_share >= 1.0)
    throw std::invalid_argument("simulate_micro_panel: share in [0, 1)");
  const Eigen::MatrixXd clean = simulate_ma_noiseless(ma, T, seed);

  double sigma_v = 0.0;
  if (meas_error_share > 0.0) {
    const Eigen::VectorXd mean = clean.rowwise().mean();
    const double avg_var =
        (clean.colwise() - mean).rowwise().squaredNorm().mean() /
        static_cast<double>(T - 1);
    sigma_v = std::sqrt(meas_error_share / (1.0 - meas_error_share) * avg_var);
  }

  PanelData panel;
  panel.Y = clean;
  panel.seed = seed;
  if (sigma_v > 0.0) {
    GaussianStream vs(seed, 1);
    for (Eigen::Index t = 0; t < panel.Y.cols(); ++t)
      for (Eigen::Index i = 0; i < panel.Y.rows(); ++i)
        panel.Y(i, t) += sigma_v * vs.next();
  }
  return panel;
}

double commutability_slackness(const Eigen::MatrixXd& J) {
  if (J.rows() != J.cols())
    throw DimensionMismatch("commutability_slackness: J must be square");
  const auto H = J.rows();
  // F J shifts rows up; J F shifts columns right.
  Eigen::MatrixXd FJ = Eigen::MatrixXd::Zero(H, H);
  FJ.topRows(H - 1) = J.bottomRows(H - 1);
  Eigen::MatrixXd JF = Eigen::MatrixXd::Zero(H, H);
  JF.rightCols(H - 1) = J.leftCols(H - 1);
  const double denom = FJ.norm();
  if (denom == 0.0)
    throw ZeroDenominator("commutability_slackness: F J = 0");
  return (FJ - JF).norm() / denom;
}

}  // namespace dfmkit
