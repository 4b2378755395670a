#pragma once

#include <filesystem>

#include <json.hpp>

#include "dfmkit/estimation.hpp"

namespace dfmkit {

struct BindingSpec {
  GeneratorBinding binding;
  ParameterVector params;
};

// Builds an estimable generator from a config object. Two kinds:
//
//   "dfm_diag": N-factor DFM with A = diag(rho_1..rho_N), C =
//   diag(scale_1..scale_N), a fixed loading matrix G (CSV file or i.i.d.
//   standard-normal rows from "G_seed"), and measurement std "sigma_v".
//
//   "ma": Jacobian-set parameterization from a manifest file; slots are
//   "rho:<shock>", "scale:<shock>" (scales that shock's Psi columns), and
//   "sigma_v".
//
// Slots not bound to a parameter take their value from "defaults".
// Parameter entries: {name, slot, lo, hi, init}.
BindingSpec make_binding(const nlohmann::json& config,
                         const std::filesystem::path& base_dir);

}  // namespace dfmkit
