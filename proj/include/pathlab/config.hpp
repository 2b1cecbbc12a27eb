#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "pathlab/coefficients.hpp"
#include "pathlab/pathspace.hpp"

namespace pathlab {

// Flat key=value configuration. Sections are dotted (sim.h=0.01); '#' starts a comment.
//
//   coefficients.name     linear | dini_sqrt | dini_log | custom
//   coefficients.<param>  builtin parameter override (theta, beta, k1, sigma0, radius)
//   coefficients.D/M/L/S  custom linear matrices, rows separated by ';' ("1,0;0,1")
//   path.d, path.tau, path.T_mem
//   sim.h, sim.T, sim.N_particles, sim.N_replicas, sim.kappa, sim.seed, sim.tau0,
//   sim.epsilon_alpha, sim.delta, sim.workers
//   zvonkin.L, zvonkin.dx
//   testfn.amplitude, testfn.profile (endpoint | memory)
//   output.dir
struct ExperimentConfig {
  std::string coefficients = "linear";
  std::map<std::string, double> coefficient_params;
  std::map<std::string, std::string> custom_matrices;

  int d = 1;
  double tau = 1.0;
  double T_mem = 10.0;

  double h = 0.01;
  double T = 8.0;
  std::size_t N_particles = 256;
  std::size_t N_replicas = 4096;
  double kappa = 4.0;
  std::uint64_t seed = 20240601;
  double tau0 = 0.5;
  std::optional<double> epsilon_alpha;  // default: 0 when alpha = 0, else 1
  double delta = 0.5;
  unsigned workers = 0;                 // 0: all hardware threads

  double zvonkin_L = 10.0;
  double zvonkin_dx = 1e-3;

  double testfn_amplitude = 1.0;
  std::string testfn_profile = "endpoint";

  std::string output_dir = "pathlab_out";

  PathSpaceConfig path() const { return PathSpaceConfig::make(d, tau, h, T_mem); }
  CoefficientSet build_coefficients() const;
  double epsilon(double alpha) const;
  // Throws Configuration on violated invariants (0 < tau0 < tau, delta in (0,1), ...).
  void validate() const;
  // Extra rule for coupling experiments.
  void require_kappa() const;

  std::string to_text() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<input>");
// Throws Configuration naming the path when the file cannot be read.
ExperimentConfig load_config(const std::string& path);

// "a,b;c,d" -> 2x2 matrix.
Mat parse_matrix(const std::string& text);

}  // namespace pathlab
