#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "dfmkit/ma.hpp"
#include "dfmkit/rank_selection.hpp"
#include "dfmkit/state_space.hpp"

namespace dfmkit {

// Headerless CSV, one row per observable, '.' decimal point, 17 significant
// digits (round-trip exact for doubles).
void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M);
std::string to_csv(const Eigen::MatrixXd& M);
Eigen::MatrixXd read_csv(const std::filesystem::path& path);
Eigen::MatrixXd parse_csv(const std::string& text, const std::string& origin);

// Write-to-temp-then-rename, so partially written files never appear under
// the final name.
void write_atomic(const std::filesystem::path& path, const std::string& data);

// Model files: {"schema": "dfmkit-model-v1", N, M, sigma_v, A, C, G} where
// each matrix is either a flat row-major array or {"file": "relative.csv"}.
StateSpaceModel load_model(const std::filesystem::path& path);
StateSpaceModel model_from_json(const nlohmann::json& j,
                                const std::filesystem::path& base_dir);
nlohmann::json model_to_json(const StateSpaceModel& model);

// Jacobian manifest: {"schema": "dfmkit-jacobians-v1", M, H, inputs: [names],
// shocks: [{name, rho?}], consumption_jac: {p: csv}, input_irf: {p: csv}?,
// ge_jac: {"p:x": csv}?} with CSV paths relative to the manifest.
JacobianSet load_jacobian_set(const std::filesystem::path& path);

nlohmann::json rank_report_to_json(const RankReport& report);
std::string rank_report_table(const RankReport& report);

// FNV-1a over the canonical dump, for provenance stamps in reports.
std::string config_hash(const nlohmann::json& config);

// Throws ConfigError when j contains a key outside `allowed`.
void reject_unknown_keys(const nlohmann::json& j,
                         const std::vector<std::string>& allowed,
                         const std::string& context);

}  // namespace dfmkit
