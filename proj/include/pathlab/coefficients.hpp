#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pathlab/cloud.hpp"
#include "pathlab/linalg.hpp"
#include "pathlab/pathspace.hpp"

namespace pathlab {

// Closed-form Dini moduli: power C s^beta (beta in (0,1]) and log-type C (log(e + 1/s))^{-q}.
class DiniModulus {
 public:
  enum class Family { Power, Log };

  static DiniModulus power(double C, double beta);
  static DiniModulus log_type(double C, double q = 2.0);

  Family family() const { return family_; }
  double scale() const { return C_; }
  double exponent() const { return exponent_; }

  double operator()(double s) const;
  // phi(e^{-u}), evaluated without forming e^{-u} (stable for large u).
  double at_log_inverse(double u) const;

  // Checks phi(0) = 0, monotonicity and midpoint concavity on a sampled grid; throws NotDini.
  void validate() const;
  std::string describe() const;

 private:
  DiniModulus(Family f, double C, double e) : family_(f), C_(C), exponent_(e) {}
  Family family_;
  double C_;
  double exponent_;
};

// \int_0^1 phi(s)/s ds by Gauss-Kronrod on doubling intervals in u = log(1/s), with a geometric tail
// estimate. Throws NotDini when the increments stop shrinking.
double dini_integral(const DiniModulus& phi);

using Drift0 = std::function<Vec(const Vec&)>;
// The law argument may be null only for sets that ignore the law (K1 = 0).
using Drift1 = std::function<Vec(const PathSegment&, const ParticleCloud*)>;
using Diffusion = std::function<Mat(const Vec&)>;

// b = b0(xi(0)) + b1(xi, mu) with diffusion sigma(xi(0)) and the constants of the standing hypotheses.
struct CoefficientSet {
  std::string name;
  int d = 1;
  Drift0 b0;
  Drift1 b1;
  Diffusion sigma;
  double K = 1.0;
  double K1 = 0.0;
  double alpha = 0.0;
  DiniModulus phi = DiniModulus::power(1.0, 1.0);
  double b0_bound = 0.0;      // declared sup |b0|
  bool b0_vanishes = false;   // b0 == 0: no transform is needed
  bool sigma_constant = false;
  Vec center;                 // typical location of the dynamics, used to place experiment pairs
};

// Linear path-distribution dependent coefficients
//   b1(xi, mu) = D xi(0) + M \int e^{2 tau s} xi(s) ds + L m(mu),   sigma = S,   b0 = 0
// with m(mu) the mean endpoint. K and K1 are computed from the matrices on the given grid.
struct LinearSpec {
  Mat drift;   // D
  Mat memory;  // M
  Mat law;     // L
  Mat sigma;   // S
};
CoefficientSet linear_coefficients(const LinearSpec& spec, const PathSpaceConfig& cfg, const std::string& name = "custom_linear");

// Builtin gallery: "linear", "dini_sqrt", "dini_log". `params` overrides the named parameters
// (theta, beta, k1, sigma0); unknown names are a configuration error.
CoefficientSet builtin_coefficients(const std::string& name, const PathSpaceConfig& cfg,
                                    const std::map<std::string, double>& params = {});
std::vector<std::string> builtin_names();

// b0(xi(0)) + b1(xi, law).
Vec eval_drift(const CoefficientSet& coeffs, const PathSegment& seg, const ParticleCloud* law);

// sigma* (sigma sigma*)^{-1}; throws SingularDiffusion when a is not invertible.
Mat right_inverse(const Mat& sigma);

struct HypothesisCheck {
  std::string name;
  double worst_ratio = 0.0;  // observed / allowed
  bool passed = true;
  std::string message;       // describes the worst input, or the failure
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;
  std::size_t samples = 0;
  bool passed() const;
  const HypothesisCheck& check(const std::string& name) const;
};

// Sampled certificate for (H1)-(H3). Pass iff every ratio <= 1 + 1e-9.
ValidationReport validate_H(const CoefficientSet& coeffs, const PathSpaceConfig& cfg, std::size_t sample_budget,
                            std::uint64_t seed, unsigned workers = 0);

// Random segment used by the samplers: piecewise-linear knots under an envelope e^{-rho tau s}.
PathSegment random_segment(const PathSpaceConfig& cfg, const Vec& center, double scale, std::uint64_t seed,
                           std::uint32_t replica, std::uint32_t particle);

}  // namespace pathlab
