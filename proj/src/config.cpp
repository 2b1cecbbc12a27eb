#include "pathlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "pathlab/error.hpp"

namespace pathlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  require(ec == std::errc() && ptr == end && std::isfinite(out), ErrorKind::Configuration,
          "key " + key + ": '" + value + "' is not a number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  require(ec == std::errc() && ptr == end, ErrorKind::Configuration,
          "key " + key + ": '" + value + "' is not a nonnegative integer");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Mat parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> r;
    std::stringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) r.push_back(to_double("matrix", trim(cell)));
    rows.push_back(std::move(r));
  }
  require(!rows.empty() && !rows.front().empty(), ErrorKind::Configuration, "empty matrix '" + text + "'");
  const std::size_t n = rows.size();
  Mat m(n, rows.front().size());
  for (std::size_t i = 0; i < n; ++i) {
    require(rows[i].size() == static_cast<std::size_t>(m.cols()), ErrorKind::Configuration,
            "ragged matrix '" + text + "'");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Configuration,
            source + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), ErrorKind::Configuration,
            source + ":" + std::to_string(lineno) + ": empty key or value");

    if (key == "coefficients.name") c.coefficients = value;
    else if (key == "coefficients.D" || key == "coefficients.M" || key == "coefficients.L" || key == "coefficients.S")
      c.custom_matrices[key.substr(13)] = value;
    else if (key.rfind("coefficients.", 0) == 0) c.coefficient_params[key.substr(13)] = to_double(key, value);
    else if (key == "path.d") c.d = static_cast<int>(to_uint(key, value));
    else if (key == "path.tau") c.tau = to_double(key, value);
    else if (key == "path.T_mem") c.T_mem = to_double(key, value);
    else if (key == "sim.h") c.h = to_double(key, value);
    else if (key == "sim.T") c.T = to_double(key, value);
    else if (key == "sim.N_particles") c.N_particles = to_uint(key, value);
    else if (key == "sim.N_replicas") c.N_replicas = to_uint(key, value);
    else if (key == "sim.kappa") c.kappa = to_double(key, value);
    else if (key == "sim.seed") c.seed = to_uint(key, value);
    else if (key == "sim.tau0") c.tau0 = to_double(key, value);
    else if (key == "sim.epsilon_alpha") c.epsilon_alpha = to_double(key, value);
    else if (key == "sim.delta") c.delta = to_double(key, value);
    else if (key == "sim.workers") c.workers = static_cast<unsigned>(to_uint(key, value));
    else if (key == "zvonkin.L") c.zvonkin_L = to_double(key, value);
    else if (key == "zvonkin.dx") c.zvonkin_dx = to_double(key, value);
    else if (key == "testfn.amplitude") c.testfn_amplitude = to_double(key, value);
    else if (key == "testfn.profile") c.testfn_profile = value;
    else if (key == "output.dir") c.output_dir = value;
    else fail(ErrorKind::Configuration, source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Configuration, "cannot read config file '" + path + "'");
  return parse_config(in, path);
}

void ExperimentConfig::validate() const {
  (void)path();
  require(tau0 > 0 && tau0 < tau, ErrorKind::Configuration, "need 0 < sim.tau0 < path.tau");
  require(delta > 0 && delta < 1, ErrorKind::Configuration, "sim.delta must lie in (0,1)");
  require(T > 0 && T <= T_mem, ErrorKind::Configuration, "need 0 < sim.T <= path.T_mem");
  require(N_particles >= 2, ErrorKind::Configuration, "sim.N_particles must be >= 2");
  require(N_replicas >= 2, ErrorKind::Configuration, "sim.N_replicas must be >= 2");
  require(kappa >= 0, ErrorKind::Configuration, "sim.kappa must be >= 0");
  require(!epsilon_alpha || *epsilon_alpha >= 0, ErrorKind::Configuration, "sim.epsilon_alpha must be >= 0");
  require(zvonkin_L > 0 && zvonkin_dx > 0, ErrorKind::Configuration, "zvonkin.L and zvonkin.dx must be positive");
  require(testfn_amplitude > 0, ErrorKind::Configuration, "testfn.amplitude must be positive");
  require(testfn_profile == "endpoint" || testfn_profile == "memory", ErrorKind::Configuration,
          "testfn.profile must be endpoint or memory");
  require(coefficients == "custom" || custom_matrices.empty(), ErrorKind::Configuration,
          "matrices are only read for coefficients.name=custom");
}

void ExperimentConfig::require_kappa() const {
  require(kappa > tau, ErrorKind::Configuration,
          "sim.kappa = " + fmt(kappa) + " must exceed path.tau = " + fmt(tau));
}

double ExperimentConfig::epsilon(double alpha) const {
  if (epsilon_alpha) return *epsilon_alpha;
  return alpha > 0 ? 1.0 : 0.0;
}

CoefficientSet ExperimentConfig::build_coefficients() const {
  const PathSpaceConfig cfg = path();
  if (coefficients != "custom") {
    CoefficientSet c = builtin_coefficients(coefficients, cfg, coefficient_params);
    require(c.d == d, ErrorKind::Configuration, "coefficient dimension does not match path.d");
    return c;
  }
  require(coefficient_params.empty(), ErrorKind::Configuration, "custom coefficients take matrices only");
  auto get = [&](const char* key, const Mat& fallback) {
    const auto it = custom_matrices.find(key);
    if (it == custom_matrices.end()) return fallback;
    Mat m = parse_matrix(it->second);
    require(m.rows() == d && m.cols() == d, ErrorKind::Configuration,
            std::string("coefficients.") + key + " must be " + std::to_string(d) + "x" + std::to_string(d));
    return m;
  };
  LinearSpec spec{get("D", -identity(d)), get("M", Mat::Zero(d, d)), get("L", Mat::Zero(d, d)), get("S", identity(d))};
  return linear_coefficients(spec, cfg, "custom");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "coefficients.name=" << coefficients << "\n";
  for (const auto& [k, v] : coefficient_params) os << "coefficients." << k << "=" << fmt(v) << "\n";
  for (const auto& [k, v] : custom_matrices) os << "coefficients." << k << "=" << v << "\n";
  os << "path.d=" << d << "\npath.tau=" << fmt(tau) << "\npath.T_mem=" << fmt(T_mem) << "\n";
  os << "sim.h=" << fmt(h) << "\nsim.T=" << fmt(T) << "\nsim.N_particles=" << N_particles
     << "\nsim.N_replicas=" << N_replicas << "\nsim.kappa=" << fmt(kappa) << "\nsim.seed=" << seed
     << "\nsim.tau0=" << fmt(tau0) << "\nsim.delta=" << fmt(delta) << "\n";
  if (epsilon_alpha) os << "sim.epsilon_alpha=" << fmt(*epsilon_alpha) << "\n";
  os << "zvonkin.L=" << fmt(zvonkin_L) << "\nzvonkin.dx=" << fmt(zvonkin_dx) << "\n";
  os << "testfn.amplitude=" << fmt(testfn_amplitude) << "\ntestfn.profile=" << testfn_profile << "\n";
  os << "output.dir=" << output_dir << "\n";
  return os.str();
}

}  // namespace pathlab
