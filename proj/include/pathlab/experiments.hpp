#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathlab/config.hpp"
#include "pathlab/parallel.hpp"
#include "pathlab/simulate.hpp"
#include "pathlab/stats.hpp"
#include "pathlab/zvonkin.hpp"

namespace pathlab {

enum class Verdict { Pass, Fail, Inconclusive };
const char* to_string(Verdict v);
Verdict combine(Verdict a, Verdict b);

// Everything an experiment needs for one configuration: the coefficients, the Zvonkin map when b0 is
// present, and the dynamics built on them.
struct Lab {
  ExperimentConfig config;
  PathSpaceConfig cfg;
  CoefficientSet coeffs;
  std::shared_ptr<const ZvonkinMap> map;
  std::optional<LambdaSweep> sweep;
  std::shared_ptr<const Dynamics> dyn;

  unsigned workers() const { return config.workers == 0 ? default_workers() : config.workers; }
  double epsilon() const { return config.epsilon(coeffs.alpha); }
};

Lab make_lab(const ExperimentConfig& config);
// Uses `coeffs` instead of the configured set (the grid and simulation keys still come from `config`).
Lab make_lab(const ExperimentConfig& config, CoefficientSet coeffs);

// f(xi) = exp(A tanh(<w, xi> - offset)) with <w, xi> = v.xi(0) ("endpoint") or
// tau v.\int e^{2 tau s} xi(s) ds ("memory"); v is a unit vector.
class TestFunction {
 public:
  enum class Profile { Endpoint, Memory, Constant };

  static TestFunction make(const PathSpaceConfig& cfg, Profile profile, double amplitude, const Vec& direction,
                           double offset);
  static TestFunction constant(const PathSpaceConfig& cfg, double value);
  // Profile and amplitude from the config, direction e_1, offset placed at the coefficient center.
  static TestFunction from_config(const Lab& lab);

  double log_f(const PathSegment& seg) const;
  double operator()(const PathSegment& seg) const { return std::exp(log_f(seg)); }

  // Declared ||grad log f||, ||f|| and ||grad f|| with respect to ||.||_tau.
  double grad_log_bound() const { return amplitude_ * lipschitz_; }
  double sup() const { return std::exp(std::abs(amplitude_)); }
  double grad_bound() const { return sup() * grad_log_bound(); }
  Profile profile() const { return profile_; }
  std::string describe() const;

  // Largest sampled difference quotient |log f(a) - log f(b)| / ||a - b||_tau.
  double certify(std::size_t samples, std::uint64_t seed) const;

 private:
  TestFunction(const PathSpaceConfig& cfg, Profile p, double a, Vec v, double offset, double lipschitz, double constant)
      : cfg_(cfg), profile_(p), amplitude_(a), v_(std::move(v)), offset_(offset), lipschitz_(lipschitz), constant_(constant) {}
  double inner(const PathSegment& seg) const;

  PathSpaceConfig cfg_;
  Profile profile_;
  double amplitude_;
  Vec v_;
  double offset_;
  double lipschitz_;  // ||<w, .>||_Lip
  double constant_;
};

// Initial condition pairs. For point masses `mu`/`nu` are deterministic; shift families mu, mu + (eta - xi)
// realize W_k(mu, nu) = ||eta - xi||_tau through the shared-randomness coupling.
struct PairSpec {
  std::string label;
  InitialLaw mu;
  InitialLaw nu;
  double distance = 0.0;  // ||xi - eta||_tau, equal to W_{2+eps}(mu, nu) for shift families
};

// `count` point-mass pairs around the coefficient center with distances cycling over
// {0.25, 0.5, 1, 0.35, 0.7, 1.4}; `salt` changes only the base points (training and held-out grids).
std::vector<PairSpec> make_point_pairs(const Lab& lab, std::size_t count, std::uint32_t salt);
// The same pairs turned into Gaussian-bridge shift families of the given amplitude.
std::vector<PairSpec> make_law_pairs(const Lab& lab, std::size_t count, std::uint32_t salt, double amplitude);

std::vector<double> uniform_times(double T, double step);

// ---- exponential decay of the coupling distance ----

struct DecayFit {
  double p = 1.0;
  LineFit fit;           // log E||Z_t||^p against t on [T/4, T]
  double threshold = 0;  // -p tau0
  bool passed = false;
};

struct DecayReport {
  std::string coefficients;
  double kappa = 0, tau0 = 0, h = 0, truncation_factor = 0, distance = 0;
  std::size_t replicas = 0, blowups = 0;
  std::vector<double> times;
  std::vector<std::vector<Estimate>> moments;  // [p index][time] E||Z_t||^p
  std::vector<DecayFit> fits;
  // Fitted gradient constant: max_t E||Z_t|| / (e^{-tau0 t} ||xi - eta||).
  double gradient_constant = 0.0;
  bool degenerate = false;  // xi = eta: every norm vanishes
  Verdict verdict = Verdict::Pass;
};

struct DecayOptions {
  std::vector<double> powers{1.0, 2.0, 4.0};
  std::size_t replicas = 0;  // 0: config N_replicas
  double save_step = 0.25;
};

DecayReport run_decay(const Lab& lab, const PathSegment& xi, const PathSegment& eta, const DecayOptions& opts = {});
// Default pair: the first training point pair.
DecayReport run_decay(const Lab& lab, const DecayOptions& opts = {});

// ---- relative entropy of the coupling ----

struct EntropyPoint {
  std::string label;
  double distance = 0;
  double weight = 1;            // e^{delta ||eta||^{2 alpha}}
  std::vector<Estimate> H;      // E_Q 1/2 \int_0^t |gamma|^2 per save time
  Estimate plateau_gap;         // H(T) - H(T/2)
  bool monotone = true;
  bool plateau = true;
  double required_c = 0;        // H(T) / (weight distance^2)
  double margin = 0;            // held-out: c weight distance^2 + 3 se - H(T)
};

struct EntropyReport {
  std::string coefficients;
  double kappa = 0, h = 0, delta = 0, truncation_factor = 0;
  std::size_t replicas = 0, blowups = 0;
  std::vector<double> times;
  std::vector<EntropyPoint> training, held_out;
  double c = 0;  // fitted on training
  bool validated = true;
  Verdict verdict = Verdict::Pass;
  // Lambda-hat at a segment: c e^{delta ||xi||^{2 alpha}}.
  double lambda_at(const PathSegment& xi, double alpha) const;
};

struct EntropyOptions {
  std::size_t pairs = 6;     // per grid
  std::size_t replicas = 0;  // 0: config N_replicas
  double save_step = 0.5;
};

EntropyReport run_entropy(const Lab& lab, const EntropyOptions& opts = {});
// Entropy curve of a single pair (no fit).
EntropyPoint entropy_point(const Lab& lab, const PathSegment& xi, const PathSegment& eta, std::size_t replicas,
                           const std::vector<double>& times, std::size_t* blowups = nullptr);

// ---- asymptotic log-Harnack ----

struct AlhPoint {
  std::string label;
  double t = 0, distance = 0;
  Estimate lhs;     // P_t log f(eta)
  Estimate rhs0;    // log P_t f(xi)
  Estimate defect;  // lhs - rhs0
  Estimate excess;  // P_t log f(eta) - P_t log f(xi) with shared noise: the defect minus a Jensen gap
  double bound_shape = 0;  // distance^2 + e^{-tau0 t} ||grad log f|| distance
  double required_c = 0;
  double margin = 0;       // held-out: c bound_shape + 3 se - defect
  bool noisy = false;      // stderr above 10% of |defect|
};

struct AlhReport {
  std::string coefficients;
  std::string mode;  // "paths" (point masses, law-free) or "laws" (interacting particles)
  double tau0 = 0, h = 0, grad_log_f = 0, truncation_factor = 0;
  std::size_t replicas = 0;
  std::vector<double> times;
  std::vector<AlhPoint> training, held_out;
  double c = 0;
  std::size_t violations = 0, noisy_violations = 0;
  std::vector<double> excess_rates, excess_rate_stderr;  // per pair with >= 2 significant points
  bool excess_degenerate = false;                        // no pair had a measurable excess
  bool excess_passed = true;
  Verdict verdict = Verdict::Pass;
};

struct AlhOptions {
  std::vector<double> times{1, 2, 4, 8};
  std::size_t replicas = 0;  // 0: config N_replicas
  // Paths: each replica is an independent path with a fixed law argument (requires K1 = 0).
  // Laws: every sample is a particle of an interacting cloud started from the initial law.
  bool interacting = true;
};

AlhReport run_alh(const Lab& lab, const TestFunction& f, const std::vector<PairSpec>& training,
                  const std::vector<PairSpec>& held_out, const AlhOptions& opts = {});

// ---- W2 growth between two McKean-Vlasov flows ----

struct GrowthCurve {
  std::size_t particles = 0;
  std::vector<Estimate> w2;  // over repeats, per save time
  Estimate initial;          // W_{2+eps}(mu, nu) of the initial clouds
  double c0 = 0;             // smallest c with mean W2(t) <= c e^{ct} W_{2+eps}
  std::vector<double> log_slope;  // fitted slope of log W2 on [0, T] (with stderr in [1])
};

struct GrowthReport {
  std::string coefficients;
  double h = 0, epsilon = 0, truncation_factor = 0;
  std::size_t repeats = 0;
  std::vector<double> times;
  GrowthCurve base, doubled;
  double c0_change = 0;       // |c0(2N) - c0(N)| / c0(N)
  std::size_t violations = 0; // doubled curve above the base envelope by > 3 se
  Verdict verdict = Verdict::Pass;
};

struct GrowthOptions {
  std::size_t particles = 0;  // 0: config N_particles
  std::size_t repeats = 4;
  double save_step = 0.5;
};

GrowthReport run_w2_growth(const Lab& lab, const InitialLaw& mu, const InitialLaw& nu, const GrowthOptions& opts = {});
GrowthCurve growth_curve(const Lab& lab, const InitialLaw& mu, const InitialLaw& nu, std::size_t particles,
                         std::size_t repeats, const std::vector<double>& times);

// ---- gradient estimate ----

struct GradientPoint {
  double t = 0, step = 0;
  Estimate quotient;      // |P_t f(xi) - P_t f(xi + step v)| / (step ||v||)
  Estimate variance;      // P_t f^2 - (P_t f)^2 at xi
  double rhs = 0;         // sqrt(2 Lambda var) + ||grad f|| Gamma_t
  double margin = 0;      // rhs - quotient
  bool noisy = false;
};

struct GradientReport {
  std::string coefficients, function;
  double lambda_hat = 0, gamma_constant = 0, tau0 = 0, grad_f = 0, h = 0;
  std::size_t replicas = 0;
  std::vector<GradientPoint> points;
  double min_margin = 0;
  Verdict verdict = Verdict::Pass;
};

struct GradientOptions {
  std::vector<double> times{1, 2, 4};
  std::vector<double> steps{0.4, 0.2, 0.1};
  std::size_t replicas = 0;
};

GradientReport run_gradient_estimate(const Lab& lab, const TestFunction& f, const EntropyReport& entropy,
                                     const DecayReport& decay, const GradientOptions& opts = {});

}  // namespace pathlab
