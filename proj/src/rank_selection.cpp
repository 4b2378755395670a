#include "dfmkit/rank_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "dfmkit/errors.hpp"

namespace dfmkit {

Eigen::VectorXd singular_spectrum(const Eigen::MatrixXd& Y, int n_max) {
  if (n_max < 1 || n_max > std::min(Y.rows(), Y.cols()))
    throw RankTooLarge("singular_spectrum: n_max must be in [1, min(M, J)]");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Y);
  return svd.singularValues().head(n_max);
}

double gavish_donoho_lambda(double beta) {
  if (beta <= 0.0)
    throw std::invalid_argument("gavish_donoho_lambda: beta must be > 0");
  return std::sqrt(2.0 * (beta + 1.0) +
                   8.0 * beta /
                       (beta + 1.0 + std::sqrt(beta * beta + 14.0 * beta + 1.0)));
}

GavishDonohoThreshold gavish_donoho(int M, int T, double sigma) {
  if (M < 1 || T < 1 || sigma <= 0.0)
    throw std::invalid_argument("gavish_donoho: M, T >= 1 and sigma > 0");
  GavishDonohoThreshold out;
  // The cited result covers beta = M/T in (0, 1]; for beta > 1 swap the
  // roles of M and T and flag the output.
  int rows = M, cols = T;
  if (M > T) {
    std::swap(rows, cols);
    out.outside_regime = true;
  }
  out.beta = static_cast<double>(rows) / static_cast<double>(cols);
  out.lambda = gavish_donoho_lambda(out.beta);
  out.tau = out.lambda * std::sqrt(static_cast<double>(cols)) * sigma;
  return out;
}

std::map<int, double> bai_ng_ic(
    const std::map<int, Eigen::MatrixXd>& residuals_by_rank, int M, int T) {
  if (residuals_by_rank.empty())
    throw EmptyResiduals("bai_ng_ic: no residual matrices supplied");
  const double m = static_cast<double>(M);
  const double tt = static_cast<double>(T);
  const double penalty_unit = ((m + tt) / (m * tt)) * std::log(m * tt / (m + tt));
  std::map<int, double> ic;
  for (const auto& [n, resid] : residuals_by_rank) {
    if (resid.size() == 0)
      throw EmptyResiduals("bai_ng_ic: empty residual matrix at n = " +
                           std::to_string(n));
    const double v = resid.squaredNorm() / (m * tt);
    ic[n] = v + static_cast<double>(n) * penalty_unit;
  }
  return ic;
}

std::map<int, double> aggregate_r2(
    const Eigen::MatrixXd& panel, const std::map<int, ReducedVAR>& fits,
    const std::optional<Eigen::VectorXd>& weights) {
  const auto m = panel.rows();
  const auto T = panel.cols();
  if (T < 2) throw PanelTooShort("aggregate_r2: need T >= 2");

  Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
  if (weights) {
    if (weights->size() != m)
      throw DimensionMismatch("aggregate_r2: weights length != M");
    if ((weights->array() < 0.0).any())
      throw std::invalid_argument("aggregate_r2: weights must be >= 0");
    const double s = weights->sum();
    if (s <= 0.0) throw std::invalid_argument("aggregate_r2: weights sum to 0");
    w = *weights * (static_cast<double>(m) / s);
  }

  // Total sum of squares about the row time-mean over t = 2..T.
  const Eigen::MatrixXd tail = panel.rightCols(T - 1);
  const Eigen::VectorXd row_mean = tail.rowwise().mean();
  const Eigen::VectorXd tss =
      (tail.colwise() - row_mean).rowwise().squaredNorm();

  std::map<int, double> out;
  for (const auto& [n, var] : fits) {
    if (var.B.rows() != m)
      throw DimensionMismatch("aggregate_r2: fit dimension != M");
    const Eigen::MatrixXd resid =
        panel.rightCols(T - 1) - var.B * panel.leftCols(T - 1);
    const Eigen::VectorXd ssr = resid.rowwise().squaredNorm();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      // A row whose variation is at rounding level relative to its magnitude
      // carries no information; its R^2 is defined as zero.
      const double scale =
          std::max(1.0, tail.row(i).squaredNorm()) * 1e-24;
      const double r2 = tss[i] > scale ? 1.0 - ssr[i] / tss[i] : 0.0;
      acc += w[i] * r2;
    }
    out[n] = acc / static_cast<double>(m);
  }
  return out;
}

Eigen::MatrixXd residual_autocov_matrix(const Eigen::MatrixXd& residuals) {
  const auto L = residuals.cols();
  if (L < 2) throw PanelTooShort("residual_autocov: need L >= 2");
  return residuals.rightCols(L - 1) * residuals.leftCols(L - 1).transpose() /
         static_cast<double>(L);
}

double residual_autocov(const Eigen::MatrixXd& residuals) {
  return residual_autocov_matrix(residuals).cwiseAbs().maxCoeff();
}

RankReport select_rank(const Eigen::MatrixXd& Y, int n_max,
                       const RankSelectionConfig& config) {
  if (n_max < 1 || n_max > std::min(Y.rows(), Y.cols() - 1))
    throw RankTooLarge("select_rank: n_max must be in [1, min(M, T-1)]");
  const SnapshotPair pair = build_snapshots(Y);

  RankReport report;

  // One SVD shared by every candidate rank (nested truncations).
  const TruncatedSVD svd = truncated_svd(pair.Y, n_max);
  report.singular_values = svd.S;

  std::map<int, ReducedVAR> fits;
  std::map<int, Eigen::MatrixXd> residuals;
  int fitted_max = 0;
  for (int n = 1; n <= n_max; ++n) {
    if (svd.S[n - 1] <= 1e-14 * std::max(svd.S[0], 1.0)) break;
    fits.emplace(n, dmd_fit_from_svd(pair, svd, n, config.shrinkage));
    residuals.emplace(n, pair.Yp - fits.at(n).B * pair.Y);
    fitted_max = n;
  }

  std::ostringstream why;
  if (fitted_max == 0) {
    report.chosen_N = 0;
    report.rationale = "no factor structure: panel is numerically zero";
    return report;
  }

  report.r2_values = aggregate_r2(Y, fits);
  report.ic_values = bai_ng_ic(residuals, static_cast<int>(Y.rows()), pair.J());
  for (const auto& [n, resid] : residuals)
    report.autocov_values[n] = residual_autocov(resid);

  // Threshold rule. With sigma unknown, fall back to the median-singular-
  // value surrogate omega(beta) * s_med (coefficients from the hard-
  // thresholding literature); a relative floor guards the noiseless case.
  {
    const Eigen::VectorXd all = singular_spectrum(
        pair.Y, static_cast<int>(std::min(pair.Y.rows(), pair.Y.cols())));
    double tau;
    if (config.gd_sigma) {
      report.gd = gavish_donoho(static_cast<int>(Y.rows()), pair.J(),
                                *config.gd_sigma);
      tau = report.gd.tau;
    } else {
      double beta = static_cast<double>(std::min(pair.Y.rows(), pair.Y.cols())) /
                    static_cast<double>(std::max(pair.Y.rows(), pair.Y.cols()));
      const double omega =
          0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
      const double s_med = all[all.size() / 2];
      report.gd.beta = beta;
      report.gd.lambda = gavish_donoho_lambda(beta);
      report.gd.tau = omega * s_med;
      tau = report.gd.tau;
      why << "sigma unknown: threshold from median singular value; ";
    }
    const double floor = 1e-10 * all[0];
    report.gd_rank = static_cast<int>(
        (all.array() > std::max(tau, floor)).count());
  }

  // Primary criterion: smallest n whose R^2 gain over n-1 falls below the
  // plateau tolerance (R^2_0 := 0).
  double prev = 0.0;
  int chosen = fitted_max;
  for (int n = 1; n <= fitted_max; ++n) {
    if (report.r2_values.at(n) - prev < config.plateau_tol) {
      chosen = n - 1;
      break;
    }
    prev = report.r2_values.at(n);
  }
  report.chosen_N = chosen;

  if (chosen == 0) {
    why << "no factor structure: rank-1 fit adds R^2 < "
        << config.plateau_tol;
  } else {
    why << "R^2 plateaus after n=" << chosen;
    int ic_argmin = fitted_max;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [n, v] : report.ic_values)
      if (v < best) best = v, ic_argmin = n;
    why << "; IC argmin=" << ic_argmin
        << (ic_argmin == chosen ? " (agrees)" : " (disagrees)");
    why << "; threshold count=" << report.gd_rank
        << (report.gd_rank == chosen ? " (agrees)" : " (disagrees)");
    if (chosen == n_max)
      why << "; R^2 still rising at n_max - consider a larger n_max";
  }
  report.rationale = why.str();
  return report;
}

RankReport select_rank(const PanelData& panel, int n_max,
                       const RankSelectionConfig& config) {
  return select_rank(panel.Y, n_max, config);
}

}  // namespace dfmkit
