#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "pathlab/cloud.hpp"

namespace pathlab {

enum class OTSolver { Assignment, MinCostFlow, Entropic };
const char* to_string(OTSolver solver);

struct OTPlan {
  Eigen::MatrixXd cost;
  Eigen::MatrixXd plan;
  double objective = 0.0;  // <plan, cost>
  OTSolver solver = OTSolver::Assignment;
  double regularization = 0.0;  // entropic epsilon (absolute), 0 for exact solvers
  double duality_gap = 0.0;     // primal minus a feasible dual bound; 0 for exact solvers
};

struct OTOptions {
  // Exact solvers are used while rows*cols stays at or below this size.
  std::size_t exact_cutoff = 4096;
  // Uniform square problems are solved exactly by assignment up to this many points per side,
  // regardless of exact_cutoff (O(n^3), cheap at desk scale).
  std::size_t assignment_cutoff = 1024;
  // Entropic regularization relative to the largest cost entry.
  double entropic_relative_eps = 1e-3;
  int entropic_max_iterations = 20000;
  double entropic_tolerance = 1e-10;
};

// Minimum-cost perfect assignment of a square cost matrix (Kuhn-Munkres with potentials).
// Returns the total cost; row_to_col receives the matching.
double solve_assignment(const Eigen::MatrixXd& cost, std::vector<int>& row_to_col);

// Exact transport between weight vectors by successive shortest paths.
OTPlan solve_transport_exact(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b);

// Log-domain Sinkhorn followed by rounding onto the transport polytope; the returned objective is the
// cost of a feasible plan (so it upper-bounds the exact value) and duality_gap is certified.
OTPlan solve_transport_entropic(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b,
                                double eps, int max_iterations = 20000, double tolerance = 1e-10);

// Chooses the solver by size and weights.
OTPlan solve_transport(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b,
                       const OTOptions& opts = {});

struct WkResult {
  double value = 0.0;
  double level = 0.0;  // truncation level achieving the value
  OTSolver solver = OTSolver::Assignment;
  double duality_gap = 0.0;
  double regularization = 0.0;
  std::size_t levels_evaluated = 0;
};

// Ground cost matrix ||xi_i - eta_j||_{N,tau}^k.
Eigen::MatrixXd truncated_cost_matrix(const ParticleCloud& A, const ParticleCloud& B, double k, double N_trunc);

// (min over couplings of sum pi_ij ||xi_i - eta_j||_{N,tau}^k)^{1/k}, k >= 1.
WkResult wk_truncated(const ParticleCloud& A, const ParticleCloud& B, double k, double N_trunc,
                      const OTOptions& opts = {});

// Truncated distances at every grid level N = h, 2h, .., T_mem (entry j-1 is level j h).
std::vector<WkResult> wk_level_profile(const ParticleCloud& A, const ParticleCloud& B, double k,
                                       const OTOptions& opts = {});

// Max over truncation levels. Exact OT values are nondecreasing in the level (the ground cost is), so
// above the exact cutoff only the top level T_mem is solved.
WkResult wk_full(const ParticleCloud& A, const ParticleCloud& B, double k, const OTOptions& opts = {});

// ||mu||_k = (sum_i w_i ||xi_i||_tau^k)^{1/k}.
double cloud_moment(const ParticleCloud& A, double k);

}  // namespace pathlab
