#include "dfmkit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <Eigen/SVD>
#include <json.hpp>

#include "dfmkit/binding_config.hpp"
#include "dfmkit/dmd.hpp"
#include "dfmkit/errors.hpp"
#include "dfmkit/estimation.hpp"
#include "dfmkit/io.hpp"
#include "dfmkit/ma.hpp"
#include "dfmkit/rank_selection.hpp"
#include "dfmkit/rng.hpp"
#include "dfmkit/state_space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dfmkit {
namespace {

struct RunOptions {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  std::optional<std::uint64_t> seed;  // overrides the config's master seed
};

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + p.string());
  return p;
}

void write_json(const fs::path& path, const json& j) {
  write_atomic(path, j.dump(2) + "\n");
}

double spectral_norm(const Eigen::MatrixXd& X) {
  if (X.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues()(0);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const json& config, const fs::path& config_dir,
                 const RunOptions& opt, std::ostream& out) {
  reject_unknown_keys(config,
                      {"schema", "kind", "model", "manifest", "H", "T",
                       "burn_in", "seed", "sigma_v", "meas_error_share",
                       "keep_latent"},
                      "simulate config");
  const int T = config.at("T").get<int>();
  if (T <= 0) throw ConfigError("simulate: T must be positive");
  const std::uint64_t seed =
      opt.seed ? *opt.seed : config.value("seed", 0ULL);
  const std::string kind = config.at("kind").get<std::string>();

  PanelData panel;
  json meta;
  if (kind == "dfm") {
    StateSpaceModel model =
        load_model(config_dir / config.at("model").get<std::string>());
    const int burn_in = config.value("burn_in", 200);
    const bool keep_latent = config.value("keep_latent", false);
    panel = simulate_dfm(model, T, burn_in, seed, keep_latent);
    meta["burn_in"] = burn_in;
    meta["sigma_v"] = model.sigma_v;
  } else if (kind == "ma") {
    JacobianSet jac =
        load_jacobian_set(config_dir / config.at("manifest").get<std::string>());
    MARepresentation ma = assemble_ma(jac, config.value("H", jac.H));
    if (config.contains("meas_error_share")) {
      const double share = config.at("meas_error_share").get<double>();
      panel = simulate_micro_panel(ma, T, seed, share);
      meta["meas_error_share"] = share;
    } else {
      const double sigma_v = config.value("sigma_v", 0.0);
      panel = simulate_ma_panel(ma, T, seed, sigma_v);
      meta["sigma_v"] = sigma_v;
    }
    meta["truncation_suspect"] = ma.truncation_suspect();
  } else {
    throw ConfigError("simulate: unknown kind '" + kind + "'");
  }

  const fs::path out_dir = prepare_out_dir(opt.out_dir);
  write_atomic(out_dir / "panel.csv", to_csv(panel.Y));
  if (panel.latent)
    write_atomic(out_dir / "latent.csv", to_csv(*panel.latent));
  meta["schema"] = "dfmkit-simulate-meta-v1";
  meta["command"] = "simulate";
  meta["kind"] = kind;
  meta["M"] = panel.M();
  meta["T"] = panel.T();
  meta["seed"] = seed;
  meta["config_hash"] = config_hash(config);
  write_json(out_dir / "meta.json", meta);
  out << "wrote " << (out_dir / "panel.csv").string() << " (" << panel.M()
      << " x " << panel.T() << ")\n";
  return 0;
}

// ------------------------------------------------------------- select-rank

int cmd_select_rank(const json& config, const fs::path& config_dir,
                    const RunOptions& opt, std::ostream& out) {
  reject_unknown_keys(
      config,
      {"schema", "data", "n_max", "plateau_tol", "gd_sigma", "shrinkage"},
      "select-rank config");
  Eigen::MatrixXd Y = read_csv(config_dir / config.at("data").get<std::string>());
  const int n_max = config.at("n_max").get<int>();
  RankSelectionConfig rc;
  if (config.contains("plateau_tol"))
    rc.plateau_tol = config.at("plateau_tol").get<double>();
  if (config.contains("gd_sigma"))
    rc.gd_sigma = config.at("gd_sigma").get<double>();
  if (config.contains("shrinkage"))
    rc.shrinkage = config.at("shrinkage").get<double>();

  RankReport report = select_rank(Y, n_max, rc);
  json j = rank_report_to_json(report);
  j["config_hash"] = config_hash(config);

  const fs::path out_dir = prepare_out_dir(opt.out_dir);
  write_json(out_dir / "rank_report.json", j);
  const std::string table = rank_report_table(report);
  write_atomic(out_dir / "rank_report.txt", table);
  out << table;
  return 0;
}

// -------------------------------------------------------------------- fit

OptConfig opt_config_from(const json& config) {
  OptConfig oc;
  if (!config.contains("opt")) return oc;
  const json& o = config.at("opt");
  reject_unknown_keys(o, {"max_evals", "tol", "init_step"}, "opt");
  oc.max_evals = o.value("max_evals", oc.max_evals);
  oc.tol = o.value("tol", oc.tol);
  oc.init_step = o.value("init_step", oc.init_step);
  return oc;
}

MCMCConfig mcmc_config_from(const json& config) {
  MCMCConfig mc;
  if (!config.contains("mcmc")) return mc;
  const json& m = config.at("mcmc");
  reject_unknown_keys(m,
                      {"steps", "burn_in", "target_accept", "adapt_interval",
                       "initial_step_scale", "seed"},
                      "mcmc");
  mc.steps = m.value("steps", mc.steps);
  mc.burn_in = m.value("burn_in", mc.burn_in);
  mc.target_accept = m.value("target_accept", mc.target_accept);
  mc.adapt_interval = m.value("adapt_interval", mc.adapt_interval);
  mc.initial_step_scale = m.value("initial_step_scale", mc.initial_step_scale);
  mc.seed = m.value("seed", mc.seed);
  return mc;
}

// Frequency-domain objective at theta for either binding kind.
std::function<double(const Eigen::VectorXd&)> whittle_objective(
    const Eigen::MatrixXd& data, const GeneratorBinding& binding,
    int horizon) {
  return [&data, &binding, horizon](const Eigen::VectorXd& theta) {
    SpectralModel sm;
    if (binding.kind == GeneratorBinding::Kind::Ma) {
      auto [ma, sigma_v] = binding.ma_map(theta);
      sm.psi = std::move(ma);
      sm.sigma_v = sigma_v;
    } else {
      StateSpaceModel model = binding.dfm_map(theta);
      sm.psi = ma_from_dfm(model, horizon);
      sm.sigma_v = model.sigma_v;
    }
    sm.Sigma_e =
        Eigen::MatrixXd::Identity(sm.psi.r(), sm.psi.r());
    return whittle_loglik(data, sm);
  };
}

json theta_json(const std::vector<std::string>& names,
                const Eigen::VectorXd& values) {
  json j = json::object();
  for (size_t i = 0; i < names.size(); ++i)
    j[names[i]] = values[static_cast<Eigen::Index>(i)];
  return j;
}

int cmd_fit(const json& config, const fs::path& config_dir,
            const RunOptions& opt, std::ostream& out) {
  reject_unknown_keys(config,
                      {"schema", "data", "estimator", "binding", "opt", "mcmc",
                       "whittle_horizon"},
                      "fit config");
  Eigen::MatrixXd data =
      read_csv(config_dir / config.at("data").get<std::string>());
  BindingSpec spec = make_binding(config.at("binding"), config_dir);
  if (opt.seed) spec.binding.base_seed = *opt.seed;
  const std::string estimator = config.value("estimator", "mle");

  const fs::path out_dir = prepare_out_dir(opt.out_dir);
  json result;
  result["schema"] = "dfmkit-fit-v1";
  result["estimator"] = estimator;
  result["config_hash"] = config_hash(config);
  result["parameter_names"] = spec.params.names;

  if (estimator == "mle") {
    MleResult fit = mle_fit(data, spec.binding, spec.params,
                            opt_config_from(config));
    result["theta"] = theta_json(spec.params.names, fit.theta);
    result["loglik"] = fit.loglik;
    result["converged"] = fit.converged;
    result["no_improvement"] = fit.no_improvement;
    result["at_bound"] = fit.at_bound;
    result["evaluations"] = fit.trace.size();
  } else if (estimator == "rwmh") {
    MCMCConfig mc = mcmc_config_from(config);
    if (opt.seed) mc.seed = *opt.seed;
    Chain chain = rwmh_sample(data, spec.binding, spec.params, mc);
    // chain.csv: one row per kept draw, parameters then the log-likelihood.
    Eigen::MatrixXd rows(chain.draws.rows(), chain.draws.cols() + 1);
    rows.leftCols(chain.draws.cols()) = chain.draws;
    rows.rightCols(1) = chain.logliks;
    write_atomic(out_dir / "chain.csv", to_csv(rows));
    const Eigen::VectorXd mean = chain.posterior_mean(mc.burn_in);
    const Eigen::MatrixXd cov = chain.posterior_cov(mc.burn_in);
    result["posterior_mean"] = theta_json(spec.params.names, mean);
    json sd = json::object();
    for (size_t i = 0; i < spec.params.names.size(); ++i)
      sd[spec.params.names[i]] =
          std::sqrt(cov(static_cast<Eigen::Index>(i),
                        static_cast<Eigen::Index>(i)));
    result["posterior_std"] = sd;
    result["accept_rate"] = chain.accept_rate;
    result["accept_rate_post_burn_in"] = chain.accept_rate_post;
    result["steps"] = mc.steps;
    result["burn_in"] = mc.burn_in;
    result["step_scale"] = chain.step_scale;
  } else if (estimator == "whittle") {
    const int horizon = config.value("whittle_horizon", 300);
    MleResult fit = maximize(whittle_objective(data, spec.binding, horizon),
                             spec.params, opt_config_from(config));
    result["theta"] = theta_json(spec.params.names, fit.theta);
    result["loglik"] = fit.loglik;
    result["converged"] = fit.converged;
    result["no_improvement"] = fit.no_improvement;
    result["at_bound"] = fit.at_bound;
    result["horizon"] = horizon;
  } else {
    throw ConfigError("fit: unknown estimator '" + estimator + "'");
  }

  write_json(out_dir / "fit.json", result);
  out << "wrote " << (out_dir / "fit.json").string() << "\n";
  return 0;
}

// --------------------------------------------------------------- mc-study

int cmd_mc_study(const json& config, const fs::path& config_dir,
                 const RunOptions& opt, std::ostream& out) {
  reject_unknown_keys(config,
                      {"schema", "binding", "truth", "replications", "T_data",
                       "master_seed", "estimator", "opt", "mcmc",
                       "whittle_horizon"},
                      "mc-study config");
  BindingSpec spec = make_binding(config.at("binding"), config_dir);

  StudyConfig sc;
  sc.replications = config.value("replications", 0);
  if (sc.replications <= 0)
    throw ConfigError("mc-study: replications must be positive");
  sc.T_data = config.value("T_data", 120);
  sc.master_seed = opt.seed ? *opt.seed : config.value("master_seed", 0ULL);
  const std::string estimator = config.value("estimator", "mle");
  if (estimator == "mle")
    sc.estimator = Estimator::Mle;
  else if (estimator == "rwmh")
    sc.estimator = Estimator::Rwmh;
  else if (estimator == "whittle")
    sc.estimator = Estimator::WhittleMle;
  else
    throw ConfigError("mc-study: unknown estimator '" + estimator + "'");
  sc.opt = opt_config_from(config);
  sc.mcmc = mcmc_config_from(config);
  sc.whittle_horizon = config.value("whittle_horizon", sc.whittle_horizon);

  ParameterVector truth = spec.params;
  if (config.contains("truth")) {
    const auto& t = config.at("truth");
    if (static_cast<int>(t.size()) != truth.size())
      throw ConfigError("mc-study: truth length must match params");
    for (size_t i = 0; i < t.size(); ++i)
      truth.values[static_cast<Eigen::Index>(i)] = t[i].get<double>();
    if (!truth.in_bounds(truth.values))
      throw ConfigError("mc-study: truth outside parameter bounds");
  }

  StudyResult study = monte_carlo_study(spec.binding, truth, sc);

  const fs::path out_dir = prepare_out_dir(opt.out_dir);
  write_atomic(out_dir / "draws.csv", to_csv(study.draws));
  json summary;
  summary["schema"] = "dfmkit-mc-study-v1";
  summary["config_hash"] = config_hash(config);
  summary["estimator"] = estimator;
  summary["replications"] = sc.replications;
  summary["T_data"] = sc.T_data;
  summary["master_seed"] = sc.master_seed;
  summary["parameter_names"] = spec.params.names;
  summary["truth"] = theta_json(spec.params.names, truth.values);
  summary["mean"] = theta_json(spec.params.names, study.mean);
  summary["std"] = theta_json(spec.params.names, study.stddev);
  summary["bias"] = theta_json(spec.params.names, study.bias);
  summary["failures"] = study.failures;
  summary["errors"] = study.errors;
  write_json(out_dir / "summary.json", summary);

  out << "parameter        truth        mean         std\n";
  for (size_t i = 0; i < spec.params.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %10.6f  %10.6f  %10.6f\n",
                  spec.params.names[i].c_str(), truth.values[k],
                  study.mean[k], study.stddev[k]);
    out << line;
  }
  if (study.failures > 0)
    out << study.failures << " of " << sc.replications
        << " replications failed\n";
  return 0;
}

// --------------------------------------------------------------- validate

int cmd_validate(const json& config, const fs::path& config_dir,
                 const RunOptions& opt, std::ostream& out) {
  reject_unknown_keys(config,
                      {"schema", "model", "j_max", "m_ladder", "ladder_seeds",
                       "G_seed", "T", "seed", "riccati_tol"},
                      "validate config");
  StateSpaceModel model =
      load_model(config_dir / config.at("model").get<std::string>());
  const double tol = config.value("riccati_tol", 1e-12);
  InnovationsForm innov = solve_riccati(model, tol);

  json report;
  report["schema"] = "dfmkit-validate-v1";
  report["config_hash"] = config_hash(config);
  report["N"] = model.N();
  report["M"] = model.M();
  report["spectral_radius"] = model.spectral_radius();
  report["rank_conditions"] = model.satisfies_rank_conditions();
  report["riccati_residual"] = innov.riccati_residual;
  report["gain_gap"] = spectral_norm(model.A - innov.K * model.G);

  // ||B_j|| decay of the innovations-form VAR coefficients.
  const int j_max = config.value("j_max", 5);
  std::vector<double> b_norms;
  for (int j = 1; j <= j_max; ++j)
    b_norms.push_back(spectral_norm(var_coefficient(model, innov, j)));
  report["var_coefficient_norms"] = b_norms;

  // ||A - K G|| across a ladder of cross-section sizes, holding (A, C)
  // fixed and redrawing i.i.d. standard-normal loading rows.
  if (config.contains("m_ladder")) {
    const int seeds = config.value("ladder_seeds", 10);
    const std::uint64_t g_seed = config.value("G_seed", 7ULL);
    json ladder = json::array();
    for (const auto& mj : config.at("m_ladder")) {
      const int m = mj.get<int>();
      if (m <= 0) throw ConfigError("validate: m_ladder entries must be > 0");
      std::vector<double> gaps;
      for (int s = 0; s < seeds; ++s) {
        GaussianStream gs(hash_combine(g_seed, static_cast<std::uint64_t>(m)),
                          static_cast<std::uint64_t>(s));
        Eigen::MatrixXd G(m, model.N());
        for (int i = 0; i < m; ++i)
          for (int k = 0; k < model.N(); ++k) G(i, k) = gs.next();
        StateSpaceModel grown(model.A, model.C, G, model.sigma_v);
        InnovationsForm inn = solve_riccati(grown, tol);
        gaps.push_back(spectral_norm(grown.A - inn.K * grown.G));
      }
      std::sort(gaps.begin(), gaps.end());
      const double median = (seeds % 2 == 1)
                                ? gaps[seeds / 2]
                                : 0.5 * (gaps[seeds / 2 - 1] + gaps[seeds / 2]);
      ladder.push_back({{"M", m}, {"median_gain_gap", median}});
    }
    report["m_ladder"] = ladder;
  }

  // Residual autocovariance of a rank-N fit on a simulated panel.
  if (config.contains("T")) {
    const int T = config.at("T").get<int>();
    const std::uint64_t seed =
        opt.seed ? *opt.seed : config.value("seed", 0ULL);
    PanelData panel = simulate_dfm(model, T, 200, seed);
    Eigen::MatrixXd Y = panel.Y;
    Y.colwise() -= Y.rowwise().mean();
    SnapshotPair snaps = build_snapshots(Y);
    ReducedVAR fit = dmd_fit(snaps, model.N());
    Eigen::MatrixXd resid = snaps.Yp - fit.B * snaps.Y;
    report["residual_autocov"] = residual_autocov(resid);
    report["simulated_T"] = T;
    report["simulation_seed"] = seed;
  }

  const fs::path out_dir = prepare_out_dir(opt.out_dir);
  write_json(out_dir / "validation.json", report);
  out << "riccati_residual  " << innov.riccati_residual << "\n"
      << "gain_gap          " << report["gain_gap"].get<double>() << "\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"latent-factor panel toolkit: simulation, rank selection, "
               "and indirect-inference estimation"};
  app.require_subcommand(1);

  RunOptions opt;
  std::string current;
  for (const char* name : {"simulate", "select-rank", "fit", "mc-study",
                           "validate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "config file (JSON)")
        ->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--threads", opt.threads, "worker-thread cap");
    sub->add_option("--seed", opt.seed, "master-seed override");
    sub->callback([&current, name] { current = name; });
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::stringstream msg;
    const int code = app.exit(e, msg, msg);
    (code == 0 ? out : err) << msg.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (opt.threads > 0) Eigen::setNbThreads(opt.threads);
    const json config = load_config(opt.config_path);
    const fs::path config_dir =
        fs::absolute(fs::path(opt.config_path)).parent_path();
    if (current == "simulate") return cmd_simulate(config, config_dir, opt, out);
    if (current == "select-rank")
      return cmd_select_rank(config, config_dir, opt, out);
    if (current == "fit") return cmd_fit(config, config_dir, opt, out);
    if (current == "mc-study") return cmd_mc_study(config, config_dir, opt, out);
    return cmd_validate(config, config_dir, opt, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace dfmkit
