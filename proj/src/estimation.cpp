#include "dfmkit/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/FFT>

#include "dfmkit/errors.hpp"
#include "dfmkit/rng.hpp"

namespace dfmkit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd demean_rows(const Eigen::MatrixXd& Y) {
  return Y.colwise() - Eigen::VectorXd(Y.rowwise().mean());
}
}  // namespace

void ParameterVector::validate() const {
  const auto d = values.size();
  if (static_cast<Eigen::Index>(names.size()) != d || lo.size() != d ||
      hi.size() != d)
    throw DimensionMismatch("ParameterVector: inconsistent lengths");
  std::set<std::string> uniq(names.begin(), names.end());
  if (uniq.size() != names.size())
    throw std::invalid_argument("ParameterVector: duplicate names");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(lo[i] < hi[i]))
      throw std::invalid_argument("ParameterVector: lo < hi violated for " +
                                  names[i]);
    if (values[i] < lo[i] || values[i] > hi[i])
      throw std::invalid_argument("ParameterVector: value out of bounds for " +
                                  names[i]);
  }
}

bool ParameterVector::in_bounds(const Eigen::VectorXd& theta) const {
  if (theta.size() != values.size()) return false;
  return (theta.array() >= lo.array()).all() &&
         (theta.array() <= hi.array()).all();
}

PanelData GeneratorBinding::simulate(const Eigen::VectorXd& theta, int length,
                                     std::uint64_t seed) const {
  if (kind == Kind::Dfm) {
    const StateSpaceModel model = dfm_map(theta);
    if (!model.is_stationary())
      throw UnstableParameters("binding: spectral radius >= 1");
    return simulate_dfm(model, length, burn_in, seed);
  }
  auto [ma, sigma_v] = ma_map(theta);
  return simulate_ma_panel(ma, length, seed, sigma_v);
}

ApproxLoglik approx_loglik(const Eigen::VectorXd& theta,
                           const Eigen::MatrixXd& data,
                           const GeneratorBinding& binding) {
  ApproxLoglik out;
  try {
    const std::uint64_t seed = binding.common_random_numbers
                                   ? binding.base_seed
                                   : hash_parameters(binding.base_seed, theta);
    const PanelData sim = binding.simulate(theta, binding.J + 1, seed);
    if (sim.M() != data.rows())
      throw DimensionMismatch("approx_loglik: binding M != data rows");
    const SnapshotPair pair = build_snapshots(demean_rows(sim.Y));
    ReducedVAR var = dmd_fit(pair, binding.N, binding.shrinkage);
    // Two small-sample corrections to the simulated residual covariance
    // before scoring the data against it. First, the plug-in precision of a
    // J-sample covariance overstates the true precision by roughly
    // (J-1)/(J-M-2) (the inverse-Wishart mean), which drags scale parameters
    // upward. Second, demeaning the length-T data removes one degree of
    // freedom per row, shrinking its variance by 1/T relative to the
    // stationary model; carry the matching (T-1)/T factor on the model side.
    const double J_eff = static_cast<double>(pair.Y.cols());
    const double M_dim = static_cast<double>(pair.Y.rows());
    const double T_obs = static_cast<double>(data.cols());
    double factor = (T_obs - 1.0) / T_obs;
    if (J_eff > M_dim + 2.0) factor *= (J_eff - 1.0) / (J_eff - M_dim - 2.0);
    var.Omega *= factor;
    out.value = dmd_loglik(var, demean_rows(data));
    if (!std::isfinite(out.value)) {
      out.rejected = true;
      out.reason = "non-finite likelihood";
      out.value = kNegInf;
    }
  } catch (const DimensionMismatch&) {
    throw;
  } catch (const std::exception& e) {
    out.value = kNegInf;
    out.rejected = true;
    out.reason = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nelder-Mead over a box

MleResult maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                   const ParameterVector& init, const OptConfig& opt) {
  init.validate();
  const int d = init.size();
  MleResult result;

  auto clamp = [&](Eigen::VectorXd x) {
    return x.cwiseMax(init.lo).cwiseMin(init.hi).eval();
  };

  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    ++evals;
    result.trace.emplace_back(x, v);
    return v;
  };

  // Vertices sorted best-first by likelihood.
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> fs;
  xs.push_back(init.values);
  fs.push_back(eval(xs[0]));
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd x = init.values;
    const double step = opt.init_step * (init.hi[i] - init.lo[i]);
    x[i] = (x[i] + step <= init.hi[i]) ? x[i] + step : x[i] - step;
    xs.push_back(clamp(x));
    fs.push_back(eval(xs.back()));
  }

  auto order = [&] {
    std::vector<int> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] > fs[b]; });
    std::vector<Eigen::VectorXd> nxs;
    std::vector<double> nfs;
    for (int i : idx) {
      nxs.push_back(xs[i]);
      nfs.push_back(fs[i]);
    }
    xs = std::move(nxs);
    fs = std::move(nfs);
  };

  order();
  while (evals < opt.max_evals) {
    const double spread = fs.front() - fs.back();
    if (std::isfinite(spread) && spread < opt.tol) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += xs[i];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = clamp(centroid + (centroid - xs.back()));
    const double fr = eval(xr);
    if (fr > fs.front()) {
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - xs.back()));
      const double fe = eval(xe);
      if (fe > fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr > fs[d - 1]) {
      xs.back() = xr;
      fs.back() = fr;
    } else {
      const Eigen::VectorXd xc = clamp(centroid + 0.5 * (xs.back() - centroid));
      const double fc = eval(xc);
      if (fc > fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        // shrink toward the best vertex
        for (size_t i = 1; i < xs.size(); ++i) {
          xs[i] = clamp(xs[0] + 0.5 * (xs[i] - xs[0]));
          fs[i] = eval(xs[i]);
          if (evals >= opt.max_evals) break;
        }
      }
    }
    order();
  }

  order();
  result.theta = xs.front();
  result.loglik = fs.front();
  result.converged = std::isfinite(fs.front()) &&
                     (fs.front() - fs.back()) < opt.tol;

  double lo_f = std::numeric_limits<double>::infinity(), hi_f = kNegInf;
  for (const auto& [x, v] : result.trace) {
    if (!std::isfinite(v)) continue;
    lo_f = std::min(lo_f, v);
    hi_f = std::max(hi_f, v);
  }
  result.no_improvement = std::isfinite(hi_f) && (hi_f - lo_f) < opt.tol;

  result.at_bound.resize(d);
  for (int i = 0; i < d; ++i) {
    const double w = init.hi[i] - init.lo[i];
    result.at_bound[i] = result.theta[i] <= init.lo[i] + 1e-9 * w ||
                         result.theta[i] >= init.hi[i] - 1e-9 * w;
  }
  return result;
}

MleResult mle_fit(const Eigen::MatrixXd& data, const GeneratorBinding& binding,
                  const ParameterVector& init, const OptConfig& opt) {
  GeneratorBinding b = binding;
  b.common_random_numbers = true;  // smooth objective for the simplex
  return maximize(
      [&](const Eigen::VectorXd& theta) {
        return approx_loglik(theta, data, b).value;
      },
      init, opt);
}

// ---------------------------------------------------------------------------
// Adaptive RWMH

Eigen::VectorXd Chain::posterior_mean(int from) const {
  return draws.bottomRows(draws.rows() - from).colwise().mean();
}

Eigen::MatrixXd Chain::posterior_cov(int from) const {
  const Eigen::MatrixXd tail = draws.bottomRows(draws.rows() - from);
  const Eigen::MatrixXd centered = tail.rowwise() - tail.colwise().mean();
  return centered.transpose() * centered /
         static_cast<double>(tail.rows() - 1);
}

Chain rwmh_sample(const std::function<double(const Eigen::VectorXd&)>& log_target,
                  const ParameterVector& init, const MCMCConfig& config) {
  init.validate();
  if (config.burn_in >= config.steps)
    throw std::invalid_argument("rwmh_sample: burn_in < steps required");
  const int d = init.size();

  Eigen::VectorXd theta = init.values;
  double lp = log_target(theta);
  if (!std::isfinite(lp))
    throw InitInvalid("rwmh_sample: initial point has -inf log target");

  GaussianStream rng(config.seed, 0);

  Chain chain;
  chain.draws.resize(config.steps, d);
  chain.logliks.resize(config.steps);

  // Proposal: theta* = theta + exp(log_step) * L z.
  const Eigen::VectorXd width = init.hi - init.lo;
  Eigen::MatrixXd L =
      (config.initial_step_scale * width).asDiagonal();
  double log_step = 0.0;
  const double scale_sq = 2.38 * 2.38 / static_cast<double>(d);

  // Running chain moments for covariance adaptation.
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  long run_n = 0;

  long accepted = 0, accepted_post = 0, window_accepted = 0;
  int adapt_rounds = 0;

  Eigen::VectorXd z(d);
  for (int step = 0; step < config.steps; ++step) {
    rng.fill(z);
    const Eigen::VectorXd prop = theta + std::exp(log_step) * (L * z);

    bool accept = false;
    if (init.in_bounds(prop)) {  // flat prior on the box
      const double lp_prop = log_target(prop);
      if (std::isfinite(lp_prop)) {
        const double log_r = lp_prop - lp;
        if (log_r >= 0.0 || std::log(rng.uniform()) < log_r) {
          theta = prop;
          lp = lp_prop;
          accept = true;
        }
      }
    }
    if (accept) {
      ++accepted;
      ++window_accepted;
      if (step >= config.burn_in) ++accepted_post;
    }

    chain.draws.row(step) = theta.transpose();
    chain.logliks[step] = lp;

    ++run_n;
    const Eigen::VectorXd delta = theta - run_mean;
    run_mean += delta / static_cast<double>(run_n);
    run_m2 += delta * (theta - run_mean).transpose();

    const bool adapting = step < config.burn_in;
    if (adapting && (step + 1) % config.adapt_interval == 0) {
      ++adapt_rounds;
      const double rate = static_cast<double>(window_accepted) /
                          static_cast<double>(config.adapt_interval);
      window_accepted = 0;
      // Robbins-Monro on the log step toward the target acceptance rate.
      const double gamma = 1.0 / std::sqrt(static_cast<double>(adapt_rounds));
      log_step += gamma * (rate - config.target_accept);

      if (run_n > 2 * d) {
        Eigen::MatrixXd cov = run_m2 / static_cast<double>(run_n - 1);
        cov.diagonal().array() +=
            1e-10 * width.array().square() + 1e-12;
        Eigen::LLT<Eigen::MatrixXd> llt(scale_sq * cov);
        if (llt.info() == Eigen::Success) L = llt.matrixL();
      }
    }
  }

  chain.accept_rate =
      static_cast<double>(accepted) / static_cast<double>(config.steps);
  chain.accept_rate_post =
      static_cast<double>(accepted_post) /
      static_cast<double>(config.steps - config.burn_in);
  chain.proposal_cov =
      std::exp(2.0 * log_step) * (L * L.transpose());
  chain.step_scale = std::exp(log_step);
  return chain;
}

Chain rwmh_sample(const Eigen::MatrixXd& data, const GeneratorBinding& binding,
                  const ParameterVector& init, const MCMCConfig& config) {
  return rwmh_sample(
      [&](const Eigen::VectorXd& theta) {
        return approx_loglik(theta, data, binding).value;
      },
      init, config);
}

// ---------------------------------------------------------------------------
// Whittle likelihood

MARepresentation ma_from_dfm(const StateSpaceModel& model, int H) {
  if (H < 1) throw std::invalid_argument("ma_from_dfm: H >= 1");
  MARepresentation ma;
  ma.c_ss = Eigen::VectorXd::Zero(model.M());
  ma.Psi.reserve(H);
  Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(model.N(), model.N());
  for (int j = 0; j < H; ++j) {
    ma.Psi.push_back(model.G * Ak * model.C);
    Ak = model.A * Ak;
  }
  return ma;
}

double whittle_loglik(const Eigen::MatrixXd& data, const SpectralModel& model) {
  using Cplx = std::complex<double>;
  const int m = static_cast<int>(data.rows());
  const int T = static_cast<int>(data.cols());
  if (T < 2) throw PanelTooShort("whittle_loglik: need T >= 2");
  if (model.psi.M() != m)
    throw DimensionMismatch("whittle_loglik: model M != data rows");
  const int r = model.psi.r();
  if (model.Sigma_e.rows() != r || model.Sigma_e.cols() != r)
    throw DimensionMismatch("whittle_loglik: Sigma_e is not r x r");

  const Eigen::MatrixXd Y = demean_rows(data);

  // Row-wise DFT of the data: D(i, j) = sum_t Y(i, t) e^{-i omega_j t}.
  Eigen::MatrixXcd D(m, T);
  {
    Eigen::FFT<double> fft;
    std::vector<double> row(T);
    std::vector<Cplx> spec(T);
    for (int i = 0; i < m; ++i) {
      for (int t = 0; t < T; ++t) row[t] = Y(i, t);
      fft.fwd(spec, row);
      for (int j = 0; j < T; ++j) D(i, j) = spec[j];
    }
  }

  const double s2 = model.sigma_v * model.sigma_v;
  const int H = model.psi.H();
  const Eigen::MatrixXcd Sigma_e_c = model.Sigma_e.cast<Cplx>();

  auto term_at = [&](int j) -> double {
    const double omega = 2.0 * M_PI * static_cast<double>(j) /
                         static_cast<double>(T);
    // Transfer function H(omega) = sum_k Psi_k e^{-i omega k}.
    Eigen::MatrixXcd Hw = Eigen::MatrixXcd::Zero(m, r);
    for (int k = 0; k < H; ++k)
      Hw += model.psi.Psi[k].cast<Cplx>() *
            std::exp(Cplx(0.0, -omega * static_cast<double>(k)));
    Eigen::MatrixXcd S = Hw * Sigma_e_c * Hw.adjoint();
    S.diagonal().array() += s2;

    Eigen::LLT<Eigen::MatrixXcd> llt(S);
    if (llt.info() != Eigen::Success)
      throw SingularSpectrum("whittle_loglik: S(omega) not positive definite");
    double log_det = 0.0;
    for (int i = 0; i < m; ++i) {
      const double di = llt.matrixLLT()(i, i).real();
      if (!(di > 0.0))
        throw SingularSpectrum("whittle_loglik: det S(omega) underflow");
      log_det += 2.0 * std::log(di);
    }
    const Eigen::VectorXcd dj = D.col(j);
    // tr(S^{-1} I(omega_j)) with I = (1/T) d d^H.
    const double quad =
        (dj.adjoint() * llt.solve(dj))(0).real() / static_cast<double>(T);
    return m * kLog2Pi + log_det + quad;
  };

  // Rows are demeaned so j = 0 carries no information; conjugate symmetry
  // pairs j with T - j.
  double total = 0.0;
  const int half = (T - 1) / 2;
  for (int j = 1; j <= half; ++j) total += 2.0 * term_at(j);
  if (T % 2 == 0) total += term_at(T / 2);
  return -0.5 * total;
}

// ---------------------------------------------------------------------------
// Monte Carlo study

StudyResult monte_carlo_study(const GeneratorBinding& binding,
                              const ParameterVector& true_theta,
                              const StudyConfig& config) {
  true_theta.validate();
  if (config.replications < 1)
    throw std::invalid_argument("monte_carlo_study: replications >= 1");
  const int d = true_theta.size();

  StudyResult result;
  result.draws.setConstant(config.replications, d,
                           std::numeric_limits<double>::quiet_NaN());
  result.errors.resize(config.replications);

  for (int rep = 0; rep < config.replications; ++rep) {
    const std::uint64_t data_seed =
        hash_combine(config.master_seed, static_cast<std::uint64_t>(rep));
    try {
      const PanelData data =
          binding.simulate(true_theta.values, config.T_data, data_seed);

      GeneratorBinding b = binding;
      // Fresh auxiliary-simulation seed per replication, independent of
      // the data seed.
      b.base_seed = hash_combine(data_seed, 0x5eedULL);

      Eigen::VectorXd theta_hat;
      switch (config.estimator) {
        case Estimator::Mle: {
          const MleResult fit = mle_fit(data.Y, b, true_theta, config.opt);
          if (!fit.converged)
            throw NonConvergence("replication did not converge");
          theta_hat = fit.theta;
          break;
        }
        case Estimator::Rwmh: {
          MCMCConfig mc = config.mcmc;
          mc.seed = hash_combine(data_seed, 0xbee5ULL);
          const Chain chain = rwmh_sample(data.Y, b, true_theta, mc);
          theta_hat = chain.posterior_mean(mc.burn_in);
          break;
        }
        case Estimator::WhittleMle: {
          if (binding.kind != GeneratorBinding::Kind::Dfm &&
              binding.kind != GeneratorBinding::Kind::Ma)
            throw std::invalid_argument("unknown binding kind");
          auto objective = [&](const Eigen::VectorXd& theta) -> double {
            try {
              SpectralModel sm;
              if (b.kind == GeneratorBinding::Kind::Dfm) {
                const StateSpaceModel mdl = b.dfm_map(theta);
                if (!mdl.is_stationary()) return kNegInf;
                sm.psi = ma_from_dfm(mdl, config.whittle_horizon);
                sm.sigma_v = mdl.sigma_v;
                sm.Sigma_e =
                    Eigen::MatrixXd::Identity(mdl.N(), mdl.N());
              } else {
                auto [ma, sigma_v] = b.ma_map(theta);
                sm.psi = std::move(ma);
                sm.sigma_v = sigma_v;
                sm.Sigma_e = Eigen::MatrixXd::Identity(sm.psi.r(), sm.psi.r());
              }
              return whittle_loglik(data.Y, sm);
            } catch (const std::exception&) {
              return kNegInf;
            }
          };
          const MleResult fit = maximize(objective, true_theta, config.opt);
          if (!fit.converged)
            throw NonConvergence("replication did not converge");
          theta_hat = fit.theta;
          break;
        }
      }
      result.draws.row(rep) = theta_hat.transpose();
    } catch (const std::exception& e) {
      ++result.failures;
      result.errors[rep] = e.what();
    }
  }

  result.mean.setConstant(d, std::numeric_limits<double>::quiet_NaN());
  result.stddev.setConstant(d, std::numeric_limits<double>::quiet_NaN());
  result.bias.setConstant(d, std::numeric_limits<double>::quiet_NaN());
  const int ok = config.replications - result.failures;
  if (ok > 0) {
    for (int k = 0; k < d; ++k) {
      double sum = 0.0;
      for (int rep = 0; rep < config.replications; ++rep)
        if (!std::isnan(result.draws(rep, k))) sum += result.draws(rep, k);
      const double mean = sum / ok;
      double ss = 0.0;
      for (int rep = 0; rep < config.replications; ++rep)
        if (!std::isnan(result.draws(rep, k)))
          ss += (result.draws(rep, k) - mean) * (result.draws(rep, k) - mean);
      result.mean[k] = mean;
      result.stddev[k] = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
      result.bias[k] = mean - true_theta.values[k];
    }
  }
  return result;
}

}  // namespace dfmkit
