#include "dfmkit/dmd.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dfmkit/errors.hpp"

namespace dfmkit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

SnapshotPair build_snapshots(const Eigen::MatrixXd& Y) {
  if (Y.cols() < 3) throw PanelTooShort("build_snapshots: need T >= 3");
  const auto J = Y.cols() - 1;
  SnapshotPair pair;
  pair.Y = Y.leftCols(J);
  pair.Yp = Y.rightCols(J);
  return pair;
}

SnapshotPair build_snapshots(const PanelData& panel) {
  return build_snapshots(panel.Y);
}

TruncatedSVD truncated_svd(const Eigen::MatrixXd& Y, int N) {
  if (N < 1 || N > std::min(Y.rows(), Y.cols()))
    throw RankTooLarge("truncated_svd: N must be in [1, min(M, J)]");

  // For wide panels the left singular system is the eigensystem of the
  // M x M Gram matrix, which is far cheaper than a full SVD of the M x J
  // matrix. Only take this route when the retained spectrum is safely
  // nonsingular; otherwise fall through to the dense SVD.
  if (Y.cols() >= 4 * Y.rows()) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(Y.rows(), Y.rows());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(Y);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
        gram.selfadjointView<Eigen::Lower>());
    if (eig.info() == Eigen::Success) {
      const Eigen::VectorXd ev = eig.eigenvalues().tail(N).reverse();
      const double total = gram.diagonal().sum();
      if (ev(N - 1) > 1e-12 * std::max(total, 1.0)) {
        TruncatedSVD out;
        out.U = eig.eigenvectors().rightCols(N).rowwise().reverse();
        out.S = ev.cwiseSqrt();
        out.V = Y.transpose() * (out.U * out.S.cwiseInverse().asDiagonal());
        out.discarded_energy =
            total > 0.0 ? std::max(0.0, 1.0 - ev.sum() / total) : 0.0;
        return out;
      }
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSVD out;
  out.U = svd.matrixU().leftCols(N);
  out.S = svd.singularValues().head(N);
  out.V = svd.matrixV().leftCols(N);
  const double total = svd.singularValues().squaredNorm();
  const double kept = out.S.squaredNorm();
  out.discarded_energy = total > 0.0 ? std::max(0.0, 1.0 - kept / total) : 0.0;
  return out;
}

ReducedVAR dmd_fit_from_svd(const SnapshotPair& pair, const TruncatedSVD& svd,
                            int N, std::optional<double> shrinkage) {
  if (N < 1 || N > svd.S.size())
    throw RankTooLarge("dmd_fit_from_svd: N exceeds retained directions");
  if (pair.Yp.rows() != pair.Y.rows() || pair.Yp.cols() != pair.Y.cols())
    throw DimensionMismatch("dmd_fit_from_svd: snapshot shape mismatch");
  if (svd.S[N - 1] <= 0.0)
    throw RankTooLarge("dmd_fit_from_svd: singular value is zero at rank N");

  ReducedVAR var;
  var.N = N;
  var.basis = svd.U.leftCols(N);
  var.left_factor =
      pair.Yp * (svd.V.leftCols(N) * svd.S.head(N).cwiseInverse().asDiagonal());
  var.B = var.left_factor * var.basis.transpose();

  // B Y = left_factor (basis' Y): going through the rank-N factors avoids a
  // dense M x M by M x J product.
  const Eigen::MatrixXd resid =
      pair.Yp - var.left_factor * (var.basis.transpose() * pair.Y);
  const int J = pair.J();
  var.Omega = Eigen::MatrixXd::Zero(pair.M(), pair.M());
  var.Omega.selfadjointView<Eigen::Lower>().rankUpdate(
      resid, 1.0 / static_cast<double>(J - 1));
  var.Omega = var.Omega.selfadjointView<Eigen::Lower>();
  const int m = pair.M();
  var.shrinkage =
      shrinkage.value_or(1e-8 * var.Omega.trace() / static_cast<double>(m));
  if (var.shrinkage < 0.0)
    throw std::invalid_argument("dmd_fit: shrinkage must be >= 0");
  var.Omega.diagonal().array() += var.shrinkage;
  return var;
}

ReducedVAR dmd_fit(const SnapshotPair& pair, int N,
                   std::optional<double> shrinkage) {
  if (N < 1 || N > std::min(pair.Y.rows(), pair.Y.cols()))
    throw RankTooLarge("dmd_fit: N must be in [1, min(M, J)]");
  return dmd_fit_from_svd(pair, truncated_svd(pair.Y, N), N, shrinkage);
}

double dmd_loglik(const ReducedVAR& var, const Eigen::MatrixXd& data) {
  if (data.rows() != var.B.rows())
    throw DimensionMismatch("dmd_loglik: data rows != VAR dimension");
  if (data.cols() < 2) throw PanelTooShort("dmd_loglik: need T >= 2");

  Eigen::LDLT<Eigen::MatrixXd> ldlt(var.Omega);
  const Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || (d.array() <= 0.0).any())
    throw SingularOmega("dmd_loglik: Omega not positive definite");
  const double log_det = d.array().log().sum();
  const double m = static_cast<double>(data.rows());

  double ll = 0.0;
  for (Eigen::Index t = 1; t < data.cols(); ++t) {
    const Eigen::VectorXd a = data.col(t) - var.B * data.col(t - 1);
    ll += -0.5 * (m * kLog2Pi + log_det + a.dot(ldlt.solve(a)));
  }
  return ll;
}

double dmd_loglik(const ReducedVAR& var, const PanelData& data) {
  return dmd_loglik(var, data.Y);
}

}  // namespace dfmkit
