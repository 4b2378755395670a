#include "dfmkit/state_space.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "dfmkit/lowrank.hpp"
#include "dfmkit/rng.hpp"

namespace dfmkit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

StateSpaceModel::StateSpaceModel(Eigen::MatrixXd A_, Eigen::MatrixXd C_,
                                 Eigen::MatrixXd G_, double sigma_v_)
    : A(std::move(A_)), C(std::move(C_)), G(std::move(G_)), sigma_v(sigma_v_) {
  const auto n = A.rows();
  if (A.cols() != n || C.rows() != n || C.cols() != n || G.cols() != n)
    throw DimensionMismatch("StateSpaceModel: inconsistent dimensions");
  if (sigma_v < 0.0)
    throw std::invalid_argument("StateSpaceModel: sigma_v must be >= 0");
}

double StateSpaceModel::spectral_radius() const {
  if (A.size() == 0) return 0.0;
  return A.eigenvalues().cwiseAbs().maxCoeff();
}

bool StateSpaceModel::satisfies_rank_conditions(double rank_tol) const {
  if (M() < N()) return false;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrG(G);
  qrG.setThreshold(rank_tol);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrA(A);
  qrA.setThreshold(rank_tol);
  return qrG.rank() == N() && qrA.rank() == N();
}

InnovationsForm solve_riccati(const StateSpaceModel& model, double tol,
                              int max_iter) {
  if (tol <= 0.0 || max_iter <= 0)
    throw std::invalid_argument("solve_riccati: tol and max_iter positive");
  if (!model.is_stationary())
    throw NonConvergence("solve_riccati: spectral radius of A >= 1");

  const Eigen::MatrixXd CCt = model.C * model.C.transpose();
  const double s2 = model.sigma_v * model.sigma_v;

  auto step = [&](const Eigen::MatrixXd& S) -> Eigen::MatrixXd {
    LowRankCov F(model.G, S, s2);
    const Eigen::MatrixXd GSAt = model.G * (S * model.A.transpose());  // M x N
    Eigen::MatrixXd next = model.A * S * model.A.transpose() + CCt -
                           GSAt.transpose() * F.solve(GSAt);
    return 0.5 * (next + next.transpose());
  };

  Eigen::MatrixXd Sigma = CCt;
  double change = 0.0;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd next = step(Sigma);
    change = (next - Sigma).cwiseAbs().maxCoeff();
    Sigma = std::move(next);
    if (change <= tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NonConvergence("solve_riccati: max_iter reached, last change = " +
                         std::to_string(change));

  InnovationsForm out;
  out.Sigma_inf = Sigma;
  out.riccati_residual = (step(Sigma) - Sigma).cwiseAbs().maxCoeff();
  LowRankCov F(model.G, Sigma, s2);
  // K = A Sigma G^T Omega^{-1}, computed as (Omega^{-1} G Sigma A^T)^T
  out.K = F.solve(model.G * (Sigma * model.A.transpose())).transpose();
  out.Omega = model.G * Sigma * model.G.transpose();
  out.Omega.diagonal().array() += s2;
  out.B1 = model.G * out.K;
  return out;
}

Eigen::MatrixXd stationary_state_cov(const StateSpaceModel& model, double tol,
                                     int max_iter) {
  if (tol <= 0.0 || max_iter <= 0)
    throw std::invalid_argument("stationary_state_cov: bad tol/max_iter");
  if (!model.is_stationary())
    throw NonConvergence("stationary_state_cov: spectral radius of A >= 1");
  const Eigen::MatrixXd CCt = model.C * model.C.transpose();
  Eigen::MatrixXd P = CCt;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd next = model.A * P * model.A.transpose() + CCt;
    next = 0.5 * (next + next.transpose());
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tol) return P;
  }
  throw NonConvergence("stationary_state_cov: max_iter reached");
}

Eigen::MatrixXd var_coefficient(const StateSpaceModel& model,
                                const InnovationsForm& innov, int j) {
  if (j < 1) throw std::invalid_argument("var_coefficient: j >= 1 required");
  if (innov.K.rows() != model.N() || innov.K.cols() != model.M())
    throw DimensionMismatch("var_coefficient: innovations form mismatch");
  if (j == 1) return innov.B1;
  const Eigen::MatrixXd AKG = model.A - innov.K * model.G;
  Eigen::MatrixXd P = AKG;
  for (int k = 2; k < j; ++k) P = AKG * P;
  return model.G * P * innov.K;
}

PanelData simulate_dfm(const StateSpaceModel& model, int T, int burn_in,
                       std::uint64_t seed, bool keep_latent) {
  if (T <= 0) throw std::invalid_argument("simulate_dfm: T must be positive");
  if (burn_in < 0) throw std::invalid_argument("simulate_dfm: burn_in >= 0");
  const int n = model.N();
  const int m = model.M();

  GaussianStream ws(seed, 0);
  GaussianStream vs(seed, 1);

  PanelData panel;
  panel.Y.resize(m, T);
  panel.seed = seed;
  panel.burn_in = burn_in;
  if (keep_latent) panel.latent.emplace(n, T);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w(n), v(m);
  for (int t = 0; t < burn_in + T; ++t) {
    ws.fill(w);
    x = model.A * x + model.C * w;
    if (t < burn_in) continue;
    const int col = t - burn_in;
    panel.Y.col(col) = model.G * x;
    if (model.sigma_v > 0.0) {
      vs.fill(v);
      panel.Y.col(col) += model.sigma_v * v;
    }
    if (panel.latent) panel.latent->col(col) = x;
  }
  return panel;
}

double kalman_loglik(const StateSpaceModel& model, const PanelData& panel) {
  if (panel.M() != model.M())
    throw DimensionMismatch("kalman_loglik: panel rows != model M");
  const int m = model.M();
  const int T = panel.T();
  const double s2 = model.sigma_v * model.sigma_v;
  const Eigen::MatrixXd CCt = model.C * model.C.transpose();

  Eigen::VectorXd xhat = Eigen::VectorXd::Zero(model.N());
  Eigen::MatrixXd P = stationary_state_cov(model);

  double ll = 0.0;
  for (int t = 0; t < T; ++t) {
    LowRankCov F(model.G, P, s2);  // throws NumericalSingularity if not PD
    const Eigen::VectorXd e = panel.Y.col(t) - model.G * xhat;
    ll += -0.5 * (m * kLog2Pi + F.log_det() + F.quad(e));

    const Eigen::MatrixXd GP = model.G * P;               // M x N
    const Eigen::MatrixXd W = F.solve(GP);                // M x N
    xhat = model.A * (xhat + GP.transpose() * F.solve(e));
    Eigen::MatrixXd Pupd = P - GP.transpose() * W;
    P = model.A * Pupd * model.A.transpose() + CCt;
    P = 0.5 * (P + P.transpose());
  }
  return ll;
}

double var1_loglik(const StateSpaceModel& model, const InnovationsForm& innov,
                   const PanelData& panel) {
  if (panel.M() != model.M())
    throw DimensionMismatch("var1_loglik: panel rows != model M");
  const int m = model.M();
  const int T = panel.T();
  if (T < 2) throw PanelTooShort("var1_loglik: need T >= 2");

  Eigen::LDLT<Eigen::MatrixXd> ldlt(innov.Omega);
  const Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || (d.array() <= 0.0).any())
    throw NumericalSingularity("var1_loglik: Omega not positive definite");
  const double log_det = d.array().log().sum();

  double ll = 0.0;
  for (int t = 1; t < T; ++t) {
    const Eigen::VectorXd a = panel.Y.col(t) - innov.B1 * panel.Y.col(t - 1);
    ll += -0.5 * (m * kLog2Pi + log_det + a.dot(ldlt.solve(a)));
  }
  return ll;
}

}  // namespace dfmkit
