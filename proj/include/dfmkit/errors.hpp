#pragma once

#include <stdexcept>
#include <string>

namespace dfmkit {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalSingularity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularOmega : NumericalSingularity {
  using NumericalSingularity::NumericalSingularity;
};

struct SingularSpectrum : NumericalSingularity {
  using NumericalSingularity::NumericalSingularity;
};

struct PanelTooShort : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RankTooLarge : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyResiduals : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ZeroDenominator : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InconsistentHorizon : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InitInvalid : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown by generator bindings when theta maps outside the admissible
// region; approx_loglik converts it into a -inf rejection.
struct UnstableParameters : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dfmkit
