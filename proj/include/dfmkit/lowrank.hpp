#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "dfmkit/errors.hpp"

namespace dfmkit {

// Self-adjoint square root of a PSD matrix; negative eigenvalues from
// roundoff are clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// F = s2 * I_M + G S G^T with S an N x N PSD matrix, N << M.
//
// When s2 > 0 the inverse and log-determinant are computed through the
// N-dimensional capacitance matrix, so every filter/Riccati step costs
// O(M N^2) instead of O(M^3). When s2 == 0 the dense M x M matrix is
// factorized directly.
class LowRankCov {
 public:
  LowRankCov(const Eigen::MatrixXd& G, const Eigen::MatrixXd& S, double s2)
      : M_(G.rows()), s2_(s2) {
    if (G.cols() != S.rows() || S.rows() != S.cols())
      throw DimensionMismatch("LowRankCov: G/S shape mismatch");
    if (s2 > 0.0 && G.rows() > G.cols()) {
      U_ = G * psd_sqrt(S);
      Eigen::MatrixXd B =
          s2 * Eigen::MatrixXd::Identity(U_.cols(), U_.cols()) +
          U_.transpose() * U_;
      cap_llt_.compute(B);
      if (cap_llt_.info() != Eigen::Success)
        throw NumericalSingularity("LowRankCov: capacitance not PD");
      log_det_ = static_cast<double>(M_ - U_.cols()) * std::log(s2) +
                 2.0 * cap_llt_.matrixLLT().diagonal().array().log().sum();
      dense_ = false;
    } else {
      Eigen::MatrixXd F = G * S * G.transpose();
      F.diagonal().array() += s2;
      dense_ldlt_.compute(F);
      const Eigen::VectorXd d = dense_ldlt_.vectorD();
      if (dense_ldlt_.info() != Eigen::Success || (d.array() <= 0.0).any())
        throw NumericalSingularity("LowRankCov: F not positive definite");
      log_det_ = d.array().log().sum();
      dense_ = true;
    }
  }

  double log_det() const { return log_det_; }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& X) const {
    if (dense_) return dense_ldlt_.solve(X);
    return (X - U_ * cap_llt_.solve(U_.transpose() * X)) / s2_;
  }

  double quad(const Eigen::VectorXd& x) const {
    return x.dot(solve(x).col(0));
  }

 private:
  Eigen::Index M_;
  double s2_;
  bool dense_ = false;
  double log_det_ = 0.0;
  Eigen::MatrixXd U_;
  Eigen::LLT<Eigen::MatrixXd> cap_llt_;
  Eigen::LDLT<Eigen::MatrixXd> dense_ldlt_;
};

}  // namespace dfmkit
