#include "dfmkit/binding_config.hpp"

#include <map>

#include "dfmkit/errors.hpp"
#include "dfmkit/io.hpp"
#include "dfmkit/rng.hpp"

namespace dfmkit {

namespace {

// theta[i] when the slot is bound to parameter i, else the default.
class SlotResolver {
 public:
  SlotResolver(std::vector<std::string> slots,
               std::map<std::string, double> defaults)
      : slots_(std::move(slots)), defaults_(std::move(defaults)) {}

  double get(const std::string& slot, const Eigen::VectorXd& theta) const {
    for (size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i] == slot) return theta[static_cast<Eigen::Index>(i)];
    auto it = defaults_.find(slot);
    if (it == defaults_.end())
      throw ConfigError("binding: slot '" + slot +
                        "' is neither a parameter nor a default");
    return it->second;
  }

 private:
  std::vector<std::string> slots_;
  std::map<std::string, double> defaults_;
};

Eigen::MatrixXd random_loading(int M, int N, std::uint64_t seed) {
  GaussianStream gs(seed, 2);
  Eigen::MatrixXd G(M, N);
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < N; ++k) G(i, k) = gs.next();
  return G;
}

}  // namespace

BindingSpec make_binding(const nlohmann::json& config,
                         const std::filesystem::path& base_dir) {
  reject_unknown_keys(config,
                      {"kind", "N", "J", "burn_in", "base_seed",
                       "common_random_numbers", "shrinkage", "factors", "M",
                       "G", "G_seed", "manifest", "H", "defaults", "params"},
                      "binding");

  BindingSpec spec;
  auto& b = spec.binding;
  b.N = config.value("N", 2);
  b.J = config.value("J", 10000);
  b.burn_in = config.value("burn_in", 200);
  b.base_seed = config.value("base_seed", 1ULL);
  b.common_random_numbers = config.value("common_random_numbers", true);
  if (config.contains("shrinkage"))
    b.shrinkage = config.at("shrinkage").get<double>();

  std::vector<std::string> slots;
  {
    if (!config.contains("params") || !config.at("params").is_array() ||
        config.at("params").empty())
      throw ConfigError("binding: 'params' must be a non-empty array");
    const auto& params = config.at("params");
    const auto d = params.size();
    spec.params.values.resize(static_cast<Eigen::Index>(d));
    spec.params.lo.resize(static_cast<Eigen::Index>(d));
    spec.params.hi.resize(static_cast<Eigen::Index>(d));
    Eigen::Index i = 0;
    for (const auto& p : params) {
      reject_unknown_keys(p, {"name", "slot", "lo", "hi", "init"}, "param");
      spec.params.names.push_back(p.at("name").get<std::string>());
      slots.push_back(p.at("slot").get<std::string>());
      spec.params.lo[i] = p.at("lo").get<double>();
      spec.params.hi[i] = p.at("hi").get<double>();
      spec.params.values[i] = p.at("init").get<double>();
      ++i;
    }
    spec.params.validate();
  }

  std::map<std::string, double> defaults;
  if (config.contains("defaults"))
    for (const auto& [k, v] : config.at("defaults").items())
      defaults[k] = v.get<double>();
  SlotResolver resolver(slots, defaults);

  const std::string kind = config.at("kind").get<std::string>();
  if (kind == "dfm_diag") {
    b.kind = GeneratorBinding::Kind::Dfm;
    const int n = config.value("factors", b.N);
    const int m = config.at("M").get<int>();
    Eigen::MatrixXd G;
    if (config.contains("G"))
      G = read_csv(base_dir / config.at("G").get<std::string>());
    else
      G = random_loading(m, n, config.value("G_seed", 12345ULL));
    if (G.rows() != m || G.cols() != n)
      throw ConfigError("binding: G must be M x factors");

    b.dfm_map = [n, G = std::move(G), resolver](
                    const Eigen::VectorXd& theta) -> StateSpaceModel {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        const double rho =
            resolver.get("rho_" + std::to_string(i + 1), theta);
        if (std::abs(rho) >= 1.0)
          throw UnstableParameters("rho_" + std::to_string(i + 1) + " >= 1");
        A(i, i) = rho;
        C(i, i) = resolver.get("scale_" + std::to_string(i + 1), theta);
      }
      const double sigma_v = resolver.get("sigma_v", theta);
      if (sigma_v < 0.0) throw UnstableParameters("sigma_v < 0");
      return StateSpaceModel(A, C, G, sigma_v);
    };
  } else if (kind == "ma") {
    b.kind = GeneratorBinding::Kind::Ma;
    if (!config.contains("manifest"))
      throw ConfigError("binding: kind 'ma' requires 'manifest'");
    JacobianSet jac =
        load_jacobian_set(base_dir / config.at("manifest").get<std::string>());
    const int H = config.value("H", jac.H);

    b.ma_map = [jac = std::move(jac), H, resolver](const Eigen::VectorXd& theta)
        -> std::pair<MARepresentation, double> {
      JacobianSet j = jac;
      for (auto& shock : j.shocks) {
        // Only re-parameterize shocks whose IRF is built from rho.
        const std::string slot = "rho:" + shock.name;
        if (shock.rho) {
          const double rho = resolver.get(slot, theta);
          if (std::abs(rho) >= 1.0)
            throw UnstableParameters(slot + " out of (-1, 1)");
          shock.rho = rho;
        }
      }
      MARepresentation ma = assemble_ma(j, H);
      for (int k = 0; k < static_cast<int>(j.shocks.size()); ++k) {
        const double scale = resolver.get("scale:" + j.shocks[k].name, theta);
        for (auto& psi : ma.Psi) psi.col(k) *= scale;
      }
      const double sigma_v = resolver.get("sigma_v", theta);
      if (sigma_v < 0.0) throw UnstableParameters("sigma_v < 0");
      return {std::move(ma), sigma_v};
    };
  } else {
    throw ConfigError("binding: unknown kind '" + kind + "'");
  }

  return spec;
}

}  // namespace dfmkit
