#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dfmkit/dmd.hpp"
#include "dfmkit/ma.hpp"
#include "dfmkit/state_space.hpp"

namespace dfmkit {

struct ParameterVector {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int size() const { return static_cast<int>(values.size()); }
  void validate() const;
  bool in_bounds(const Eigen::VectorXd& theta) const;
};

// Deterministic map from theta to a simulatable generator. Exactly one of
// dfm_map / ma_map is set, per kind. Maps may throw UnstableParameters
// (or anything else) to reject a theta.
struct GeneratorBinding {
  enum class Kind { Dfm, Ma };
  Kind kind = Kind::Dfm;

  std::function<StateSpaceModel(const Eigen::VectorXd&)> dfm_map;
  // Returns the MA representation and the measurement-error std at theta.
  std::function<std::pair<MARepresentation, double>(const Eigen::VectorXd&)>
      ma_map;

  int J = 10000;       // simulation length for the auxiliary fit
  int N = 2;           // VAR rank
  int burn_in = 200;   // DFM simulation burn-in
  std::uint64_t base_seed = 1;
  bool common_random_numbers = true;
  std::optional<double> shrinkage;

  // Simulate a panel of the given length at theta (used both for the
  // auxiliary fit and for Monte Carlo data generation).
  PanelData simulate(const Eigen::VectorXd& theta, int length,
                     std::uint64_t seed) const;
};

struct ApproxLoglik {
  double value = 0.0;
  bool rejected = false;    // theta outside the stable/admissible region
  std::string reason;
};

// Simulate-fit-score likelihood: simulate J+1 periods at theta, demean the
// simulated panel by its row means, fit the rank-N VAR, and score the
// (row-demeaned) data. Deterministic given (theta, data, binding).
ApproxLoglik approx_loglik(const Eigen::VectorXd& theta,
                           const Eigen::MatrixXd& data,
                           const GeneratorBinding& binding);

struct OptConfig {
  int max_evals = 400;
  double tol = 1e-7;        // simplex likelihood spread
  double init_step = 0.10;  // initial simplex step, fraction of box width
};

struct MleResult {
  Eigen::VectorXd theta;
  double loglik = 0.0;
  bool converged = false;
  bool no_improvement = false;  // flat trace: likely unidentified parameter
  std::vector<bool> at_bound;   // per parameter
  std::vector<std::pair<Eigen::VectorXd, double>> trace;
};

// Box-constrained Nelder-Mead maximization of approx_loglik with common
// random numbers forced on.
MleResult mle_fit(const Eigen::MatrixXd& data, const GeneratorBinding& binding,
                  const ParameterVector& init, const OptConfig& opt = {});
// Same search over an arbitrary objective (used by the Whittle estimator
// and for tests).
MleResult maximize(const std::function<double(const Eigen::VectorXd&)>& f,
                   const ParameterVector& init, const OptConfig& opt = {});

struct MCMCConfig {
  int steps = 50000;
  int burn_in = 10000;
  double target_accept = 0.234;
  int adapt_interval = 100;
  double initial_step_scale = 0.1;  // fraction of box width
  std::uint64_t seed = 0;
};

struct Chain {
  Eigen::MatrixXd draws;     // steps x d (includes burn-in)
  Eigen::VectorXd logliks;   // steps
  double accept_rate = 0.0;          // over all steps
  double accept_rate_post = 0.0;     // after burn-in
  Eigen::MatrixXd proposal_cov;      // adapted proposal (frozen form)
  double step_scale = 0.0;

  Eigen::VectorXd posterior_mean(int from) const;
  Eigen::MatrixXd posterior_cov(int from) const;
};

// Adaptive random-walk Metropolis-Hastings with a flat prior on the box.
// Proposal covariance tracks (2.38^2/d) * (chain covariance + eps I) and a
// scalar log step adapts toward target_accept; both are frozen after
// burn-in so the post-burn-in chain is Markov.
Chain rwmh_sample(const std::function<double(const Eigen::VectorXd&)>& log_target,
                  const ParameterVector& init, const MCMCConfig& config);
Chain rwmh_sample(const Eigen::MatrixXd& data, const GeneratorBinding& binding,
                  const ParameterVector& init, const MCMCConfig& config);

struct SpectralModel {
  MARepresentation psi;
  Eigen::MatrixXd Sigma_e;  // r x r shock covariance
  double sigma_v = 0.0;
};

// Frequency-domain Gaussian likelihood: rows are demeaned, the j = 0 term
// is dropped, and conjugate symmetry folds the remaining frequencies.
double whittle_loglik(const Eigen::MatrixXd& data, const SpectralModel& model);

// Truncated MA representation of a state-space model: Psi_j = G A^j C.
MARepresentation ma_from_dfm(const StateSpaceModel& model, int H);

enum class Estimator { Mle, Rwmh, WhittleMle };

struct StudyConfig {
  int replications = 50;
  int T_data = 120;
  std::uint64_t master_seed = 0;
  Estimator estimator = Estimator::Mle;
  OptConfig opt;
  MCMCConfig mcmc;
  int whittle_horizon = 300;  // MA truncation for the Whittle estimator
};

struct StudyResult {
  Eigen::MatrixXd draws;  // replications x d, NaN rows for failures
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd bias;
  int failures = 0;
  std::vector<std::string> errors;
};

StudyResult monte_carlo_study(const GeneratorBinding& binding,
                              const ParameterVector& true_theta,
                              const StudyConfig& config);

}  // namespace dfmkit
