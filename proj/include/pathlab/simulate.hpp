#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pathlab/dynamics.hpp"
#include "pathlab/rng.hpp"
#include "pathlab/stats.hpp"

namespace pathlab {

// x + drift h + sigma dW; throws BlowUp (with the step index) on a non-finite result.
Vec euler_update(const Vec& x, const Vec& drift, const Mat& sigma, double h, const Vec& dW, std::uint64_t step);
// Endpoint update followed by a one-step shift of the window.
PathSegment step_euler(PathSegment seg, const Vec& drift, const Mat& sigma, double h, const Vec& dW);

// sqrt(h) N(0, I) increment of one (seed, replica, particle) stream at `step`.
Vec brownian_increment(const NormalStream& stream, std::uint32_t step, double h, int d);

// Steps corresponding to save times on the grid {0, h, 2h, ...}; each time must lie on the grid and in [0, T].
std::vector<std::size_t> save_steps(double h, double T, const std::vector<double>& times);
std::size_t step_count(double h, double T);

// Laws of initial segments. A point mass, or base + a*e^{tau s/4}(Z + B(s)) with Z ~ N(0, I) and B a
// Brownian bridge on [-T_mem, 0] pinned to 0 at both ends. `shift` is added to every draw, so two laws
// differing only in shift are coupled by drawing with the same index (shared randomness).
struct InitialLaw {
  PathSegment base;
  double amplitude = 0.0;
  PathSegment shift;

  static InitialLaw point_mass(const PathSegment& seg);
  static InitialLaw gaussian_bridge(const PathSegment& base, double amplitude);
  InitialLaw shifted(const PathSegment& by) const;

  bool deterministic() const { return amplitude == 0.0; }
  PathSegment sample(std::uint64_t seed, std::uint32_t replica, std::uint32_t index) const;
  ParticleCloud cloud(std::uint64_t seed, std::uint32_t replica, std::size_t n) const;
};

struct PathRunOptions {
  double h = 0.01;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::uint32_t replica = 0;
  std::uint32_t particle = 0;
  std::vector<double> save_times;
};

// One path of dX = b(X_t, law) dt + sigma(X(t)) dW with a fixed law argument (may be null when the
// coefficients ignore it). The observer sees the state at every save time.
PathState simulate_path(const Dynamics& dyn, const PathSegment& xi, const ParticleCloud* law, const PathRunOptions& opts,
                        const std::function<void(double, const PathState&)>& observer = {});

struct McKeanOptions {
  double h = 0.01;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::uint32_t replica = 0;  // system index: independent systems use distinct replicas
  std::vector<double> save_times;
  bool keep_clouds = true;
  unsigned workers = 1;
};

struct McKeanResult {
  std::vector<double> times;
  std::vector<ParticleCloud> clouds;  // original coordinates, one per save time (if kept)
  std::size_t particles_exited = 0;
};

// Interacting particles: every particle's drift uses the current empirical cloud as the law.
McKeanResult simulate_mckean(const Dynamics& dyn, const ParticleCloud& init, const McKeanOptions& opts,
                             const std::function<void(double, const ParticleCloud&)>& observer = {});

struct CouplingOptions {
  double kappa = 4.0;
  double h = 0.01;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::vector<double> save_times;
  double A_coefficient = 1.0;  // c in A(t) = c \int ||Y_s||^alpha ds
  double alpha = 0.0;
  bool enforce_kappa = true;   // reject kappa <= tau
  bool record_gamma = false;
};

struct CouplingSample {
  double t = 0.0;
  double z_norm = 0.0;       // ||X_t - Y_t||_tau in simulated coordinates
  double z_norm_orig = 0.0;  // the same distance after mapping both paths back
  double half_int_gamma_sq = 0.0;
  double A = 0.0;
  double log_R = 0.0;
  Vec x_end;
  Vec y_end;
};

struct CouplingRun {
  double kappa = 0.0;
  std::vector<CouplingSample> samples;
  std::vector<Vec> gamma;  // per step, when recorded
  std::size_t exits = 0;
  bool degenerate_weight = false;  // |log R| exceeded 700
};

// The drift-corrected pair under Q, driven by one Brownian motion:
//   dX = {b(X_t) - kappa (X(t) - Y(t))} dt + sigma(X(t)) dW,   X_0 = xi
//   dY = b(Y_t) dt + sigma(Y(t)) dW,                             Y_0 = eta
// with gamma = kappa sigma(X(t))^{-1}(X(t) - Y(t)) and log R = -\int <gamma, dW> + 1/2 \int |gamma|^2.
// xi and eta are original-coordinate segments; all integrals use the left endpoint.
CouplingRun simulate_coupled_Q(const Dynamics& dyn, const PathSegment& xi, const PathSegment& eta,
                               const CouplingOptions& opts, std::uint32_t replica, const ParticleCloud* law = nullptr);

// The same pair under the reference measure P: X is uncorrected and Y carries the drift
// kappa sigma(Y) sigma(X)^{-1}(X - Y); log R = -\int <gamma, dW> - 1/2 \int |gamma|^2.
CouplingRun simulate_coupled_P(const Dynamics& dyn, const PathSegment& xi, const PathSegment& eta,
                               const CouplingOptions& opts, std::uint32_t replica, const ParticleCloud* law = nullptr);

struct LawShiftOptions {
  double kappa = 4.0;
  double h = 0.01;
  double T = 1.0;
  std::uint64_t seed = 1;
  std::size_t particles = 256;
  std::size_t replicas = 256;
  std::vector<double> save_times;
  unsigned workers = 1;
};

struct LawShiftSample {
  double t = 0.0;
  double w2 = 0.0;             // W2(mu_t, nu_t) of the particle clouds
  double max_bar_zeta = 0.0;   // max over replicas of |bar zeta_t|
  double bar_zeta_ratio = 0.0; // max |bar zeta_t| / (K1 W2), 0 when both vanish
  Estimate int_bar_zeta_sq;    // E \int_0^t |bar zeta|^2
  Estimate int_tilde_zeta_sq;  // E \int_0^t |tilde zeta|^2
  Estimate entropy;            // E 1/2 \int_0^t |bar zeta + tilde zeta|^2
  Estimate z_norm;             // E ||Y^mu_t - Y_t||_tau
};

struct LawShiftRun {
  std::vector<LawShiftSample> samples;
  double sigma_inverse_bound = 0.0;  // measured sup ||sigma^*(sigma sigma^*)^{-1}|| along the paths
};

// Two-layer coupling for laws mu (initial law `mu0`) and nu (`nu0`): the clouds of both McKean-Vlasov
// systems advance in lockstep with the coupled replicas, driven by the same initial draws and noise.
// Under Q the replica pair (Y^mu, Y) uses nu_t as its law argument; bar zeta = sigma^*(sigma sigma^*)^{-1}(X^mu)[b(X^mu, mu_t) - b(X^mu, nu_t)] and
// tilde zeta = kappa sigma-hat(Y^mu)^{-1}(Y^mu - Y). Replica initial values are drawn from mu0 and nu0
// with the same index.
LawShiftRun simulate_law_shift(const Dynamics& dyn, const InitialLaw& mu0, const InitialLaw& nu0,
                               const LawShiftOptions& opts);

struct ExpMoment {
  std::vector<double> times;
  std::vector<Estimate> value;  // E exp(beta A(t))
  std::vector<double> ess;      // effective sample size of the weights exp(beta A)
  bool unreliable = false;      // some ess < 10
};

ExpMoment exp_moment_A(std::span<const CouplingRun> runs, double beta);

}  // namespace pathlab
