#include "dfmkit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dfmkit/errors.hpp"

namespace dfmkit {

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<size_t>(n));
}

}  // namespace

std::string to_csv(const Eigen::MatrixXd& M) {
  std::string out;
  out.reserve(static_cast<size_t>(M.size()) * 20);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out.push_back(',');
      append_double(out, M(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M) {
  write_atomic(path, to_csv(M));
}

Eigen::MatrixXd parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = eol + 1;
    if (line.empty()) continue;

    std::vector<double> row;
    size_t start = 0;
    int col_no = 0;
    while (start <= line.size()) {
      size_t comma = line.find(',', start);
      if (comma == std::string_view::npos) comma = line.size();
      ++col_no;
      // trim spaces
      size_t b = start, e = comma;
      while (b < e && line[b] == ' ') ++b;
      while (e > b && line[e - 1] == ' ') --e;
      double v = 0.0;
      const auto res = std::from_chars(line.data() + b, line.data() + e, v);
      if (res.ec != std::errc() || res.ptr != line.data() + e)
        throw IoError(origin + ": parse error at row " +
                      std::to_string(line_no) + ", column " +
                      std::to_string(col_no));
      row.push_back(v);
      if (comma == line.size()) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(origin + ": ragged row " + std::to_string(line_no) +
                    " (expected " + std::to_string(rows.front().size()) +
                    " columns, got " + std::to_string(row.size()) + ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(origin + ": empty CSV");

  Eigen::MatrixXd M(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return M;
}

Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path.string());
}

void write_atomic(const std::filesystem::path& path, const std::string& data) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void reject_unknown_keys(const nlohmann::json& j,
                         const std::vector<std::string>& allowed,
                         const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int rows, int cols,
                                 const std::filesystem::path& base_dir,
                                 const std::string& name) {
  Eigen::MatrixXd M;
  if (j.is_object()) {
    reject_unknown_keys(j, {"file"}, "matrix " + name);
    M = read_csv(base_dir / j.at("file").get<std::string>());
  } else if (j.is_array()) {
    const auto flat = j.get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != rows * cols)
      throw ConfigError("matrix " + name + ": expected " +
                        std::to_string(rows * cols) + " entries, got " +
                        std::to_string(flat.size()));
    M.resize(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) M(i, k) = flat[i * cols + k];  // row-major
    return M;
  } else {
    throw ConfigError("matrix " + name + ": expected array or {file}");
  }
  if (M.rows() != rows || M.cols() != cols)
    throw ConfigError("matrix " + name + ": file is " +
                      std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                      ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  return M;
}

}  // namespace

StateSpaceModel model_from_json(const nlohmann::json& j,
                                const std::filesystem::path& base_dir) {
  reject_unknown_keys(j, {"schema", "N", "M", "sigma_v", "A", "C", "G"},
                      "model");
  if (j.value("schema", std::string{}) != "dfmkit-model-v1")
    throw ConfigError("model: schema must be 'dfmkit-model-v1'");
  const int n = j.at("N").get<int>();
  const int m = j.at("M").get<int>();
  if (n < 1 || m < 1) throw ConfigError("model: N and M must be positive");
  const double sigma_v = j.at("sigma_v").get<double>();
  return StateSpaceModel(matrix_from_json(j.at("A"), n, n, base_dir, "A"),
                         matrix_from_json(j.at("C"), n, n, base_dir, "C"),
                         matrix_from_json(j.at("G"), m, n, base_dir, "G"),
                         sigma_v);
}

StateSpaceModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return model_from_json(j, path.parent_path());
}

nlohmann::json model_to_json(const StateSpaceModel& model) {
  auto flat = [](const Eigen::MatrixXd& M) {
    std::vector<double> v;
    v.reserve(static_cast<size_t>(M.size()));
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) v.push_back(M(i, j));
    return v;
  };
  return {{"schema", "dfmkit-model-v1"},
          {"N", model.N()},
          {"M", model.M()},
          {"sigma_v", model.sigma_v},
          {"A", flat(model.A)},
          {"C", flat(model.C)},
          {"G", flat(model.G)}};
}

JacobianSet load_jacobian_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  reject_unknown_keys(j,
                      {"schema", "M", "H", "inputs", "shocks",
                       "consumption_jac", "input_irf", "ge_jac"},
                      "jacobian manifest");
  if (j.value("schema", std::string{}) != "dfmkit-jacobians-v1")
    throw ConfigError("jacobian manifest: schema must be 'dfmkit-jacobians-v1'");

  const auto base = path.parent_path();
  JacobianSet set;
  set.M = j.at("M").get<int>();
  set.H = j.at("H").get<int>();
  set.inputs = j.at("inputs").get<std::vector<std::string>>();
  for (const auto& s : j.at("shocks")) {
    reject_unknown_keys(s, {"name", "rho"}, "shock");
    ShockSpec spec;
    spec.name = s.at("name").get<std::string>();
    if (s.contains("rho")) spec.rho = s.at("rho").get<double>();
    set.shocks.push_back(std::move(spec));
  }
  for (const auto& [p, file] : j.at("consumption_jac").items())
    set.consumption_jac[p] = read_csv(base / file.get<std::string>());
  if (j.contains("input_irf"))
    for (const auto& [p, file] : j.at("input_irf").items())
      set.input_irf[p] = read_csv(base / file.get<std::string>());
  if (j.contains("ge_jac"))
    for (const auto& [key, file] : j.at("ge_jac").items()) {
      const auto colon = key.find(':');
      if (colon == std::string::npos)
        throw ConfigError("jacobian manifest: ge_jac key '" + key +
                          "' must be 'input:shock'");
      set.ge_jac[{key.substr(0, colon), key.substr(colon + 1)}] =
          read_csv(base / file.get<std::string>());
    }
  return set;
}

nlohmann::json rank_report_to_json(const RankReport& report) {
  auto map_json = [](const std::map<int, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [n, v] : m) j[std::to_string(n)] = v;
    return j;
  };
  std::vector<double> sv(report.singular_values.data(),
                         report.singular_values.data() +
                             report.singular_values.size());
  return {{"singular_values", sv},
          {"gd_threshold", report.gd.tau},
          {"gd_lambda", report.gd.lambda},
          {"gd_beta", report.gd.beta},
          {"gd_outside_regime", report.gd.outside_regime},
          {"gd_rank", report.gd_rank},
          {"ic_values", map_json(report.ic_values)},
          {"r2_values", map_json(report.r2_values)},
          {"autocov_values", map_json(report.autocov_values)},
          {"chosen_N", report.chosen_N},
          {"rationale", report.rationale}};
}

std::string rank_report_table(const RankReport& report) {
  std::ostringstream out;
  out << "n              ";
  for (const auto& [n, _] : report.r2_values)
    out << " " << std::setw(10) << n;
  out << "\nR2(n)          ";
  out << std::setprecision(4);
  for (const auto& [_, v] : report.r2_values)
    out << " " << std::setw(10) << v;
  out << "\nIC(n)          ";
  for (const auto& [_, v] : report.ic_values)
    out << " " << std::setw(10) << v;
  out << "\nmax|E[aa']|    " << std::scientific << std::setprecision(2);
  for (const auto& [_, v] : report.autocov_values)
    out << " " << std::setw(10) << v;
  out << "\nchosen N = " << report.chosen_N << " (" << report.rationale
      << ")\n";
  return out.str();
}

std::string config_hash(const nlohmann::json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

}  // namespace dfmkit
