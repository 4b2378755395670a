#pragma once

#include <optional>

#include <Eigen/Core>

#include "dfmkit/state_space.hpp"

namespace dfmkit {

// Lagged snapshot matrices: Yp column k is the successor of Y column k.
struct SnapshotPair {
  Eigen::MatrixXd Y;   // M x J
  Eigen::MatrixXd Yp;  // M x J

  int M() const { return static_cast<int>(Y.rows()); }
  int J() const { return static_cast<int>(Y.cols()); }
};

struct TruncatedSVD {
  Eigen::MatrixXd U;  // M x N, orthonormal columns
  Eigen::VectorXd S;  // N singular values, descending
  Eigen::MatrixXd V;  // J x N, orthonormal columns
  double discarded_energy = 0.0;  // fraction of squared Frobenius norm dropped
};

// Rank-N first-order VAR fit. B is stored both assembled and as the factor
// pair left_factor * basis^T with left_factor = Yp V S^{-1} (M x N) and
// basis = U (M x N).
struct ReducedVAR {
  Eigen::MatrixXd B;      // M x M, numerical rank N
  Eigen::MatrixXd Omega;  // M x M residual covariance (shrinkage included)
  Eigen::MatrixXd left_factor;
  Eigen::MatrixXd basis;
  int N = 0;
  double shrinkage = 0.0;
};

SnapshotPair build_snapshots(const PanelData& panel);
SnapshotPair build_snapshots(const Eigen::MatrixXd& Y);

// Best rank-N Frobenius approximation factors of Y (Eckart-Young).
TruncatedSVD truncated_svd(const Eigen::MatrixXd& Y, int N);

// Default shrinkage (when none is passed): 1e-8 * trace(Omega) / M.
ReducedVAR dmd_fit(const SnapshotPair& pair, int N,
                   std::optional<double> shrinkage = std::nullopt);

// Fit at rank N reusing a precomputed truncation of pair.Y with >= N
// retained directions; used to share one SVD across candidate ranks.
ReducedVAR dmd_fit_from_svd(const SnapshotPair& pair, const TruncatedSVD& svd,
                            int N, std::optional<double> shrinkage = std::nullopt);

double dmd_loglik(const ReducedVAR& var, const Eigen::MatrixXd& data);
double dmd_loglik(const ReducedVAR& var, const PanelData& data);

}  // namespace dfmkit
