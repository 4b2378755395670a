#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "dfmkit/cli.hpp"
#include "dfmkit/io.hpp"

using namespace dfmkit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int c = 0;
    path = fs::temp_directory_path() /
           ("dfmkit-cli-" + std::to_string(::getpid()) + "-" +
            std::to_string(c++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json two_factor_model(int M) {
  json g = json::array();
  // deterministic loading pattern with full column rank
  for (int i = 0; i < M; ++i) {
    g.push_back(std::cos(0.7 * i + 0.3));
    g.push_back(std::sin(1.3 * i + 1.1));
  }
  return {{"schema", "dfmkit-model-v1"},
          {"N", 2},
          {"M", M},
          {"sigma_v", 0.4},
          {"A", {0.8, 0.0, 0.0, 0.55}},
          {"C", {1.0, 0.0, 0.0, 1.0}},
          {"G", g}};
}

}  // namespace

TEST_CASE("simulate: zero-shock model yields a constant panel") {
  TempDir dir;
  json model = {{"schema", "dfmkit-model-v1"}, {"N", 1}, {"M", 2},
                {"sigma_v", 0.0},              {"A", {0.9}}, {"C", {0.0}},
                {"G", {1.0, 2.0}}};
  write_file(dir.path / "model.json", model.dump());
  json cfg = {{"kind", "dfm"}, {"model", "model.json"}, {"T", 10},
              {"seed", 1}};
  write_file(dir.path / "config.json", cfg.dump());

  CliResult r = run({"simulate", "--config", (dir.path / "config.json").string(),
                     "--out", (dir.path / "out").string()});
  REQUIRE(r.code == 0);
  Eigen::MatrixXd Y = read_csv(dir.path / "out" / "panel.csv");
  CHECK(Y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fs::exists(dir.path / "out" / "meta.json"));
}

TEST_CASE("simulate: identical runs give byte-identical outputs") {
  TempDir dir;
  write_file(dir.path / "model.json", two_factor_model(20).dump());
  json cfg = {{"kind", "dfm"}, {"model", "model.json"}, {"T", 50},
              {"seed", 7}};
  write_file(dir.path / "config.json", cfg.dump());

  for (const char* out : {"a", "b"}) {
    CliResult r =
        run({"simulate", "--config", (dir.path / "config.json").string(),
             "--out", (dir.path / out).string()});
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(dir.path / "a" / "panel.csv") ==
        slurp(dir.path / "b" / "panel.csv"));
  CHECK(slurp(dir.path / "a" / "meta.json") ==
        slurp(dir.path / "b" / "meta.json"));

  // a seed override changes the data
  CliResult r =
      run({"simulate", "--config", (dir.path / "config.json").string(),
           "--out", (dir.path / "c").string(), "--seed", "8"});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir.path / "a" / "panel.csv") !=
        slurp(dir.path / "c" / "panel.csv"));
}

TEST_CASE("end to end: simulated two-factor panel selects rank 2") {
  TempDir dir;
  write_file(dir.path / "model.json", two_factor_model(100).dump());
  json sim = {{"kind", "dfm"}, {"model", "model.json"}, {"T", 500},
              {"seed", 3}};
  write_file(dir.path / "sim.json", sim.dump());
  REQUIRE(run({"simulate", "--config", (dir.path / "sim.json").string(),
               "--out", dir.path.string()})
              .code == 0);

  json sel = {{"data", "panel.csv"}, {"n_max", 6}};
  write_file(dir.path / "sel.json", sel.dump());
  CliResult r = run({"select-rank", "--config",
                     (dir.path / "sel.json").string(), "--out",
                     (dir.path / "rank").string()});
  REQUIRE(r.code == 0);
  json rep = json::parse(slurp(dir.path / "rank" / "rank_report.json"));
  CHECK(rep.at("chosen_N").get<int>() == 2);
  CHECK(rep.contains("config_hash"));
  CHECK(fs::exists(dir.path / "rank" / "rank_report.txt"));
}

TEST_CASE("select-rank: malformed CSV reports the bad cell") {
  TempDir dir;
  write_file(dir.path / "panel.csv", "1.0,2.0\n3.0,nope\n");
  json sel = {{"data", "panel.csv"}, {"n_max", 2}};
  write_file(dir.path / "sel.json", sel.dump());
  CliResult r = run({"select-rank", "--config",
                     (dir.path / "sel.json").string(), "--out",
                     dir.path.string()});
  CHECK(r.code == 4);
  CHECK(r.err.find("row") != std::string::npos);
}

TEST_CASE("fit: missing data file exits with the I/O code") {
  TempDir dir;
  json cfg = {{"data", "missing.csv"},
              {"estimator", "mle"},
              {"binding",
               {{"kind", "dfm_diag"},
                {"M", 4},
                {"factors", 1},
                {"N", 1},
                {"defaults", {{"scale_1", 1.0}, {"sigma_v", 0.3}}},
                {"params",
                 {{{"name", "rho"}, {"slot", "rho_1"}, {"lo", -0.9},
                   {"hi", 0.9}, {"init", 0.5}}}}}}};
  write_file(dir.path / "fit.json", cfg.dump());
  CliResult r = run({"fit", "--config", (dir.path / "fit.json").string(),
                     "--out", dir.path.string()});
  CHECK(r.code == 4);
}

TEST_CASE("fit: small MLE run produces a report") {
  TempDir dir;
  json binding = {{"kind", "dfm_diag"},
                  {"M", 10},
                  {"factors", 1},
                  {"N", 1},
                  {"J", 600},
                  {"G_seed", 5},
                  {"defaults", {{"scale_1", 1.0}, {"sigma_v", 0.3}}},
                  {"params",
                   {{{"name", "rho"}, {"slot", "rho_1"}, {"lo", -0.95},
                     {"hi", 0.95}, {"init", 0.4}}}}};
  json fit_cfg = {{"data", "panel.csv"},
                  {"estimator", "mle"},
                  {"binding", binding},
                  {"opt", {{"max_evals", 30}}}};

  // deterministic synthetic panel with some persistence in every row
  Eigen::MatrixXd Y(10, 80);
  for (int i = 0; i < 10; ++i)
    for (int t = 0; t < 80; ++t)
      Y(i, t) = std::sin(0.3 * t + i) + 0.1 * std::cos(1.7 * t * (i + 1));
  write_csv(dir.path / "panel.csv", Y);
  write_file(dir.path / "cfg.json", fit_cfg.dump());

  CliResult r = run({"fit", "--config", (dir.path / "cfg.json").string(),
                     "--out", (dir.path / "out").string()});
  REQUIRE(r.code == 0);
  json rep = json::parse(slurp(dir.path / "out" / "fit.json"));
  CHECK(rep.at("estimator") == "mle");
  CHECK(rep.at("theta").contains("rho"));
  const double rho = rep.at("theta").at("rho").get<double>();
  CHECK(rho >= -0.95);
  CHECK(rho <= 0.95);
  CHECK(rep.contains("config_hash"));
}

TEST_CASE("mc-study: zero replications is a config error") {
  TempDir dir;
  json cfg = {{"replications", 0},
              {"binding",
               {{"kind", "dfm_diag"},
                {"M", 4},
                {"factors", 1},
                {"N", 1},
                {"defaults", {{"scale_1", 1.0}, {"sigma_v", 0.3}}},
                {"params",
                 {{{"name", "rho"}, {"slot", "rho_1"}, {"lo", -0.9},
                   {"hi", 0.9}, {"init", 0.5}}}}}}};
  write_file(dir.path / "cfg.json", cfg.dump());
  CliResult r = run({"mc-study", "--config", (dir.path / "cfg.json").string(),
                     "--out", dir.path.string()});
  CHECK(r.code == 2);
}

TEST_CASE("config: unknown keys are rejected") {
  TempDir dir;
  json cfg = {{"kind", "dfm"}, {"model", "m.json"}, {"T", 10},
              {"seed", 1},     {"bogus", true}};
  write_file(dir.path / "cfg.json", cfg.dump());
  CliResult r = run({"simulate", "--config", (dir.path / "cfg.json").string(),
                     "--out", dir.path.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("bogus") != std::string::npos);
}

TEST_CASE("validate: exactly observed model reports a zero gain gap") {
  TempDir dir;
  json model = {{"schema", "dfmkit-model-v1"}, {"N", 1}, {"M", 1},
                {"sigma_v", 0.0},              {"A", {0.9}}, {"C", {1.0}},
                {"G", {1.0}}};
  write_file(dir.path / "model.json", model.dump());
  json cfg = {{"model", "model.json"}, {"j_max", 3}};
  write_file(dir.path / "cfg.json", cfg.dump());
  CliResult r = run({"validate", "--config", (dir.path / "cfg.json").string(),
                     "--out", dir.path.string()});
  REQUIRE(r.code == 0);
  json rep = json::parse(slurp(dir.path / "validation.json"));
  CHECK(rep.at("gain_gap").get<double>() < 1e-10);
  CHECK(rep.at("riccati_residual").get<double>() < 1e-10);
  // ||B_2|| and beyond vanish when the state is exactly observed
  CHECK(rep.at("var_coefficient_norms")[1].get<double>() < 1e-10);
}

TEST_CASE("validate: gain gap shrinks along the cross-section ladder") {
  TempDir dir;
  write_file(dir.path / "model.json", two_factor_model(10).dump());
  json cfg = {{"model", "model.json"},
              {"m_ladder", {25, 50, 100}},
              {"ladder_seeds", 5}};
  write_file(dir.path / "cfg.json", cfg.dump());
  CliResult r = run({"validate", "--config", (dir.path / "cfg.json").string(),
                     "--out", dir.path.string()});
  REQUIRE(r.code == 0);
  json rep = json::parse(slurp(dir.path / "validation.json"));
  const auto& ladder = rep.at("m_ladder");
  REQUIRE(ladder.size() == 3);
  CHECK(ladder[1].at("median_gain_gap").get<double>() <
        ladder[0].at("median_gain_gap").get<double>());
  CHECK(ladder[2].at("median_gain_gap").get<double>() <
        ladder[1].at("median_gain_gap").get<double>());
}

TEST_CASE("validate: malformed model file is a config error") {
  TempDir dir;
  write_file(dir.path / "model.json", "{\"schema\": \"wrong\"}");
  json cfg = {{"model", "model.json"}};
  write_file(dir.path / "cfg.json", cfg.dump());
  CliResult r = run({"validate", "--config", (dir.path / "cfg.json").string(),
                     "--out", dir.path.string()});
  CHECK(r.code == 2);
}

TEST_CASE("cli: missing subcommand or config flag is a usage error") {
  CHECK(run({}).code == 2);
  CHECK(run({"simulate"}).code == 2);
  CHECK(run({"frobnicate", "--config", "x"}).code == 2);
}
