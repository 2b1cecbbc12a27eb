#include "pathlab/coefficients.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "pathlab/error.hpp"
#include "pathlab/parallel.hpp"
#include "pathlab/rng.hpp"
#include "pathlab/wasserstein.hpp"

namespace pathlab {

DiniModulus DiniModulus::power(double C, double beta) {
  require(C > 0 && std::isfinite(C), ErrorKind::NotDini, "power modulus needs C > 0");
  require(beta > 0 && beta <= 1, ErrorKind::NotDini, "power modulus needs beta in (0,1]");
  return DiniModulus(Family::Power, C, beta);
}

DiniModulus DiniModulus::log_type(double C, double q) {
  require(C > 0 && std::isfinite(C), ErrorKind::NotDini, "log modulus needs C > 0");
  require(q > 0 && std::isfinite(q), ErrorKind::NotDini, "log modulus needs q > 0");
  return DiniModulus(Family::Log, C, q);
}

double DiniModulus::operator()(double s) const {
  if (s <= 0) return 0.0;
  if (family_ == Family::Power) return C_ * std::pow(s, exponent_);
  return C_ * std::pow(std::log(M_E + 1.0 / s), -exponent_);
}

double DiniModulus::at_log_inverse(double u) const {
  if (family_ == Family::Power) return C_ * std::exp(-exponent_ * u);
  // log(e + e^u) = u + log(1 + e^{1-u})
  const double L = u > 1 ? u + std::log1p(std::exp(1.0 - u)) : 1.0 + std::log1p(std::exp(u - 1.0));
  return C_ * std::pow(L, -exponent_);
}

void DiniModulus::validate() const {
  require((*this)(0.0) == 0.0, ErrorKind::NotDini, describe() + ": phi(0) != 0");
  constexpr int n = 4001;
  std::vector<double> s(n), v(n);
  for (int i = 0; i < n; ++i) {
    s[i] = std::pow(10.0, -12.0 + 15.0 * i / (n - 1));
    v[i] = (*this)(s[i]);
  }
  for (int i = 1; i < n; ++i)
    require(v[i] >= v[i - 1], ErrorKind::NotDini, describe() + ": not nondecreasing");
  for (int i = 0; i + 1 < n; ++i) {
    const double a = s[i], b = s[i + 1] * 3.0;
    const double mid = (*this)(0.5 * (a + b));
    const double chord = 0.5 * ((*this)(a) + (*this)(b));
    require(mid >= chord - 1e-13 * std::max(1.0, chord), ErrorKind::NotDini,
            describe() + ": not midpoint-concave near s=" + std::to_string(a));
  }
}

std::string DiniModulus::describe() const {
  std::ostringstream os;
  if (family_ == Family::Power)
    os << "phi(s) = " << C_ << " s^" << exponent_;
  else
    os << "phi(s) = " << C_ << " (log(e + 1/s))^-" << exponent_;
  return os.str();
}

double dini_integral(const DiniModulus& phi) {
  phi.validate();
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double u) { return phi.at_log_inverse(u); };
  auto piece = [&](double a, double b) {
    double err = 0;
    const double v = gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14, &err);
    return v;
  };
  double total = piece(0.0, 8.0);
  double lo = 8.0;
  double prev_increment = std::numeric_limits<double>::quiet_NaN();
  int stalled = 0;
  for (int k = 0; k < 60; ++k) {
    const double inc = piece(lo, 2 * lo);
    total += inc;
    lo *= 2;
    require(std::isfinite(total) && total < 1e12, ErrorKind::NotDini,
            phi.describe() + ": partial integrals exceed cap");
    if (inc <= 1e-16 * total) return total;
    if (std::isfinite(prev_increment)) {
      const double r = inc / prev_increment;
      if (r >= 0.95) {
        require(++stalled < 6, ErrorKind::NotDini, phi.describe() + ": \\int phi(s)/s ds diverges");
      } else {
        stalled = 0;
        // Increments of a power-law tail shrink geometrically under doubling; sum the rest.
        const double tail = inc * r / (1.0 - r);
        if (tail <= 1e-10 * total && k >= 2) return total + tail;
      }
    }
    prev_increment = inc;
  }
  fail(ErrorKind::NotDini, phi.describe() + ": integral did not converge");
}

namespace {

double op_norm(const Mat& m) { return m.size() == 0 ? 0.0 : operator_norm(m); }

// Trapezoid weights times e^{2 tau s_i}: the discrete memory kernel c_i.
std::vector<double> memory_kernel(const PathSpaceConfig& cfg) {
  const SegmentKernel k(cfg);
  std::vector<double> c(cfg.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double w = (i == 0 || i + 1 == c.size()) ? 0.5 * cfg.h : cfg.h;
    c[i] = w * k.memory_exp[i];
  }
  return c;
}

// sup |J(Delta)| / ||Delta||_tau and the growth constant of J(xi) - J(xi^0), where
// J(xi) = \int e^{2 tau s} (xi(s) - xi(0)) ds on the grid.
struct MemoryConstants {
  double lipschitz = 0;
  double growth = 0;
  double tail = 0;   // sum_{i<n} c_i e^{-tau s_i}
  double end = 0;    // c_n
  double mass = 0;   // sum_i c_i
};

MemoryConstants memory_constants(const PathSpaceConfig& cfg) {
  const auto c = memory_kernel(cfg);
  const SegmentKernel k(cfg);
  MemoryConstants m;
  const std::size_t n = c.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    m.tail += c[i] / k.norm_weight[i];
    m.growth += c[i] * (1.0 / k.norm_weight[i] + 1.0);
  }
  m.end = c[n - 1];
  for (double x : c) m.mass += x;
  m.lipschitz = m.tail + std::abs(m.end - m.mass);
  return m;
}

Vec deadzone(const Vec& x, double r) {
  const double n = x.norm();
  if (n <= r) return zeros(static_cast<int>(x.size()));
  return x * (1.0 - r / n);
}

Vec flat_memory(const PathSegment& seg) {
  // J(xi) = I(xi) - xi(0) * mass
  return seg.memory_integral() - seg.endpoint() * seg.memory_mass();
}

Vec law_mean(const ParticleCloud* law, int d, double k1) {
  if (k1 == 0.0) return zeros(d);
  require(law != nullptr, ErrorKind::Configuration, "law-dependent coefficients need a law argument");
  require(law->config().d == d, ErrorKind::Configuration, "law dimension mismatch");
  return law->mean_endpoint();
}

double param(const std::map<std::string, double>& params, const char* key, double fallback) {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void check_params(const std::map<std::string, double>& params, std::initializer_list<const char*> allowed,
                  const std::string& name) {
  for (const auto& [key, value] : params) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    require(ok, ErrorKind::Configuration, "unknown parameter '" + key + "' for builtin '" + name + "'");
    require(std::isfinite(value), ErrorKind::Configuration, "parameter '" + key + "' is not finite");
  }
}

}  // namespace

CoefficientSet linear_coefficients(const LinearSpec& spec, const PathSpaceConfig& cfg, const std::string& name) {
  const int d = cfg.d;
  auto square = [&](const Mat& m, const char* what) {
    require(m.rows() == d && m.cols() == d, ErrorKind::Configuration,
            std::string(what) + " must be " + std::to_string(d) + "x" + std::to_string(d));
    require(m.allFinite(), ErrorKind::Configuration, std::string(what) + " has non-finite entries");
  };
  square(spec.drift, "drift_matrix");
  square(spec.memory, "memory_matrix");
  square(spec.law, "law_matrix");
  square(spec.sigma, "sigma_matrix");

  const MemoryConstants mc = memory_constants(cfg);
  CoefficientSet c;
  c.name = name;
  c.d = d;
  c.b0 = [d](const Vec&) { return zeros(d); };
  const Mat D = spec.drift, M = spec.memory, L = spec.law, S = spec.sigma;
  const double k1 = op_norm(L);
  c.b1 = [D, M, L, d, k1](const PathSegment& seg, const ParticleCloud* law) -> Vec {
    Vec out = D * seg.endpoint() + M * seg.memory_integral();
    if (k1 > 0) out += L * law_mean(law, d, k1);
    return out;
  };
  c.sigma = [S](const Vec&) { return S; };
  c.sigma_constant = true;
  c.b0_vanishes = true;
  c.b0_bound = 0.0;
  c.alpha = 1.0;
  c.K1 = k1;
  c.phi = DiniModulus::power(1.0, 1.0);

  const double lipschitz = op_norm(D + M * mc.end) + op_norm(M) * mc.tail;
  const double growth = op_norm(M) * mc.growth;
  double ellipticity = 0.0;
  const Mat a = S * S.transpose();
  Eigen::JacobiSVD<Mat> svd(a);
  const double smin = svd.singularValues()(d - 1);
  if (smin > 1e-14 * std::max(1.0, svd.singularValues()(0))) ellipticity = svd.singularValues()(0) + 1.0 / smin;
  c.K = std::max({lipschitz, growth, ellipticity, 1e-12});
  c.center = zeros(d);
  return c;
}

std::vector<std::string> builtin_names() { return {"linear", "dini_sqrt", "dini_log"}; }

CoefficientSet builtin_coefficients(const std::string& name, const PathSpaceConfig& cfg,
                                    const std::map<std::string, double>& params) {
  const int d = cfg.d;
  require(d <= kMaxDim, ErrorKind::Configuration, "dimension exceeds " + std::to_string(kMaxDim));
  const MemoryConstants mc = memory_constants(cfg);

  if (name == "linear") {
    check_params(params, {"theta", "beta", "k1", "sigma0"}, name);
    const double theta = param(params, "theta", 1.5), beta = param(params, "beta", 0.6);
    const double k1 = param(params, "k1", 0.5), s0 = param(params, "sigma0", 1.0);
    LinearSpec spec{-theta * identity(d), beta * identity(d), k1 * identity(d), s0 * identity(d)};
    return linear_coefficients(spec, cfg, name);
  }

  if (name == "dini_sqrt" || name == "dini_log") {
    const bool sqrt_case = name == "dini_sqrt";
    check_params(params, {"theta", "beta", "k1", "radius"}, name);
    const double theta = param(params, "theta", 1.0), beta = param(params, "beta", 0.6);
    const double k1 = param(params, "k1", sqrt_case ? 0.0 : 0.3);
    const double radius = param(params, "radius", 2.0);
    require(theta >= 0 && beta >= 0 && k1 >= 0 && radius >= 0, ErrorKind::Configuration,
            name + " parameters must be nonnegative");

    CoefficientSet c;
    c.name = name;
    c.d = d;
    c.K1 = k1;
    c.b0_bound = 1.0;
    c.center = 2.5 * unit(d, 0);
    if (sqrt_case) {
      c.b0 = [d](const Vec& x) { return std::min(std::sqrt(x.norm()), 1.0) * unit(d, 0); };
      c.phi = DiniModulus::power(1.0, 0.5);
      c.alpha = 0.5;
      c.b1 = [=](const PathSegment& seg, const ParticleCloud* law) -> Vec {
        Vec j = flat_memory(seg);
        for (int k = 0; k < d; ++k) j(k) = j(k) / std::sqrt(1.0 + std::abs(j(k)));
        Vec out = -theta * deadzone(seg.endpoint(), radius) + beta * j;
        if (k1 > 0) out += k1 * law_mean(law, d, k1);
        return out;
      };
      c.sigma = [d](const Vec&) { return identity(d); };
      c.sigma_constant = true;
      const double growth = beta * std::sqrt(std::sqrt(static_cast<double>(d)) * mc.growth);
      c.K = std::max({theta + beta * mc.lipschitz, growth, 2.0});
    } else {
      const DiniModulus psi = DiniModulus::log_type(1.0, 2.0);
      c.b0 = [d, psi](const Vec& x) { return psi(x.norm()) * unit(d, 0); };
      c.phi = psi;
      c.alpha = 0.0;
      c.b1 = [=](const PathSegment& seg, const ParticleCloud* law) -> Vec {
        Vec out = -theta * deadzone(seg.endpoint(), radius) + beta * flat_memory(seg).array().tanh().matrix();
        if (k1 > 0) out += k1 * law_mean(law, d, k1);
        return out;
      };
      c.sigma = [d](const Vec& x) { return ((1.0 + 0.25 * std::sin(x(0))) * identity(d)).eval(); };
      const double ellipticity = 0.5625 + 1.0 / 0.5625;
      const double sigma_lip = 0.25 * std::sqrt(static_cast<double>(d));
      const double growth = beta * std::sqrt(static_cast<double>(d)) / 2.0;
      c.K = std::max({theta + beta * mc.lipschitz, growth, ellipticity, sigma_lip});
    }
    return c;
  }

  std::string known;
  for (const auto& n : builtin_names()) known += (known.empty() ? "" : ", ") + n;
  fail(ErrorKind::Configuration, "unknown coefficient set '" + name + "' (known: " + known + ")");
}

Vec eval_drift(const CoefficientSet& coeffs, const PathSegment& seg, const ParticleCloud* law) {
  require(seg.dim() == coeffs.d, ErrorKind::Configuration,
          "segment dimension " + std::to_string(seg.dim()) + " does not match coefficients (" +
              std::to_string(coeffs.d) + ")");
  if (law) require(law->config() == seg.config(), ErrorKind::Configuration, "law and segment use different grids");
  return coeffs.b0(seg.endpoint()) + coeffs.b1(seg, law);
}

Mat right_inverse(const Mat& sigma) {
  const Mat a = sigma * sigma.transpose();
  Eigen::LDLT<Mat> ldlt(a);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-300,
          ErrorKind::SingularDiffusion, "sigma sigma* is not invertible");
  return sigma.transpose() * ldlt.solve(identity(static_cast<int>(sigma.rows())));
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.passed; });
}

const HypothesisCheck& ValidationReport::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  fail(ErrorKind::Precondition, "no check named " + name);
}

PathSegment random_segment(const PathSpaceConfig& cfg, const Vec& center, double scale, std::uint64_t seed,
                           std::uint32_t replica, std::uint32_t particle) {
  constexpr int knots = 9;
  const NormalStream stream(seed, Stream::Sampling, replica, particle);
  std::vector<double> z(static_cast<std::size_t>(knots * cfg.d));
  stream.fill(0, z);
  const double rho = 0.95 * stream.uniform(1);
  return PathSegment::from_function(cfg, [&](double s) {
    const double pos = (s + cfg.T_mem) / cfg.T_mem * (knots - 1);
    const int k = std::min(static_cast<int>(pos), knots - 2);
    const double frac = pos - k;
    Vec v(cfg.d);
    for (int c = 0; c < cfg.d; ++c) v(c) = (1 - frac) * z[k * cfg.d + c] + frac * z[(k + 1) * cfg.d + c];
    return (center + scale * std::exp(-rho * cfg.tau * s) * v).eval();
  });
}

namespace {

struct SampleResult {
  double ratio[6] = {0, 0, 0, 0, 0, 0};
  std::string where[6];
  bool singular = false;
  std::string singular_where;
};

enum Slot { H1 = 0, H2Lip, H2Growth, H3Bound, H3Dini, H3Sigma };
const char* kSlotNames[6] = {"H1", "H2-lipschitz", "H2-growth", "H3-bound", "H3-dini", "H3-sigma"};

std::string fmt_vec(const Vec& v) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v(i);
  os << ")";
  return os.str();
}

double safe_ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

void require_finite(const Vec& v, const std::string& where) {
  require(v.allFinite(), ErrorKind::InvalidCoefficient, "non-finite value at " + where);
}

void require_finite(const Mat& m, const std::string& where) {
  require(m.allFinite(), ErrorKind::InvalidCoefficient, "non-finite value at " + where);
}

ParticleCloud random_cloud(const PathSpaceConfig& cfg, const Vec& center, double scale, std::uint64_t seed,
                           std::uint32_t sample, std::uint32_t base, std::size_t size) {
  std::vector<PathSegment> parts;
  for (std::size_t k = 0; k < size; ++k)
    parts.push_back(random_segment(cfg, center, scale, seed, sample, base + static_cast<std::uint32_t>(k)));
  return ParticleCloud(std::move(parts));
}

SampleResult validate_sample(const CoefficientSet& c, const PathSpaceConfig& cfg, std::uint64_t seed,
                             std::uint32_t sample) {
  SampleResult r;
  const int d = c.d;
  const NormalStream stream(seed, Stream::Validation, sample);
  std::vector<double> z(static_cast<std::size_t>(2 * d));
  stream.fill(0, z);
  const double scales[4] = {0.1, 1.0, 4.0, 10.0};
  const double scale = scales[std::min(3, static_cast<int>(4 * stream.uniform(1)))];
  Vec x(d), dir(d);
  for (int k = 0; k < d; ++k) {
    x(k) = c.center(k) + scale * z[k];
    dir(k) = z[d + k];
  }
  if (dir.norm() == 0) dir = unit(d, 0);
  dir.normalize();
  const double gap = std::pow(10.0, -8.0 + 8.7 * stream.uniform(2));
  const Vec y = x + gap * dir;

  // (H1)
  const Mat sx = c.sigma(x);
  require_finite(sx, "sigma" + fmt_vec(x));
  const Mat a = sx * sx.transpose();
  Eigen::JacobiSVD<Mat> svd(a);
  const double smax = svd.singularValues()(0), smin = svd.singularValues()(d - 1);
  if (!(smin > 1e-14 * std::max(1.0, smax))) {
    r.singular = true;
    r.singular_where = "a not invertible at x=" + fmt_vec(x);
    r.ratio[H1] = std::numeric_limits<double>::infinity();
    r.where[H1] = r.singular_where;
  } else {
    r.ratio[H1] = (smax + 1.0 / smin) / c.K;
    r.where[H1] = "x=" + fmt_vec(x);
  }

  // (H3)
  const Vec bx = c.b0(x), by = c.b0(y);
  require_finite(bx, "b0" + fmt_vec(x));
  require_finite(by, "b0" + fmt_vec(y));
  r.ratio[H3Bound] = safe_ratio(bx.norm(), c.b0_bound);
  r.where[H3Bound] = "x=" + fmt_vec(x);
  r.ratio[H3Dini] = safe_ratio((bx - by).norm(), c.phi((x - y).norm()));
  r.where[H3Dini] = "x=" + fmt_vec(x) + " |x-y|=" + std::to_string(gap);
  const Mat sy = c.sigma(y);
  require_finite(sy, "sigma" + fmt_vec(y));
  r.ratio[H3Sigma] = safe_ratio((sx - sy).norm(), c.K * gap);
  r.where[H3Sigma] = r.where[H3Dini];

  // (H2): extremal perturbations +-e^{-tau s} (endpoint sign flipped half the time) or random ones.
  const PathSegment xi = random_segment(cfg, c.center, scale, seed, sample, 0);
  const bool extremal = stream.uniform(3) < 0.5;
  const bool flip = stream.uniform(4) < 0.5;
  const double eps = std::pow(10.0, -3.0 + 3.5 * stream.uniform(5));
  PathSegment delta = extremal ? PathSegment::from_function(cfg,
                                                            [&](double s) {
                                                              const double sign = (flip && s > -0.5 * cfg.h) ? -1.0 : 1.0;
                                                              return (sign * eps * std::exp(-cfg.tau * s) * dir).eval();
                                                            })
                               : eps * (random_segment(cfg, zeros(d), 1.0, seed, sample, 1) - PathSegment::zero(cfg));
  const PathSegment eta = xi + delta;
  const std::size_t m = 1 + static_cast<std::size_t>(5.999 * stream.uniform(6));
  const ParticleCloud mu = random_cloud(cfg, c.center, scale, seed, sample, 100, m);
  const bool same_law = stream.uniform(7) < 0.5;
  const ParticleCloud nu = same_law ? mu : random_cloud(cfg, c.center, scale, seed, sample, 200, m);
  const double w2 = same_law ? 0.0 : wk_truncated(mu, nu, 2.0, cfg.T_mem).value;
  const Vec b_xi = c.b1(xi, &mu), b_eta = c.b1(eta, &nu);
  require_finite(b_xi, "b1 at sample " + std::to_string(sample));
  require_finite(b_eta, "b1 at sample " + std::to_string(sample));
  r.ratio[H2Lip] = safe_ratio((b_xi - b_eta).norm(), c.K * weighted_norm(delta) + c.K1 * w2);
  r.where[H2Lip] = std::string(extremal ? "extremal" : "random") + " perturbation, sample " + std::to_string(sample) +
                   (same_law ? ", same law" : ", W2=" + std::to_string(w2));

  // Growth line on xi and on a scaled extremal segment, which probes large norms.
  const PathSegment big = (scale * 10.0 / eps) * delta;
  for (const PathSegment* s : {&xi, &big}) {
    const Vec b_full = c.b1(*s, &mu), b_flat = c.b1(flat_extension(*s), &mu);
    require_finite(b_full, "b1 at sample " + std::to_string(sample));
    require_finite(b_flat, "b1 at sample " + std::to_string(sample));
    const double allowed = c.K * (1.0 + std::pow(weighted_norm(*s), c.alpha)) + c.K1 * cloud_moment(mu, 2.0);
    const double ratio = safe_ratio((b_full - b_flat).norm(), allowed);
    if (ratio >= r.ratio[H2Growth]) {
      r.ratio[H2Growth] = ratio;
      r.where[H2Growth] = "||xi||=" + std::to_string(weighted_norm(*s)) + ", sample " + std::to_string(sample);
    }
  }
  return r;
}

}  // namespace

ValidationReport validate_H(const CoefficientSet& coeffs, const PathSpaceConfig& cfg, std::size_t sample_budget,
                            std::uint64_t seed, unsigned workers) {
  require(sample_budget >= 1, ErrorKind::Precondition, "sample_budget must be >= 1");
  require(cfg.d == coeffs.d, ErrorKind::Configuration, "path-space dimension does not match coefficients");
  require(coeffs.center.size() == coeffs.d, ErrorKind::Configuration, "coefficient center has wrong dimension");
  coeffs.phi.validate();
  std::vector<SampleResult> results(sample_budget);
  parallel_for(
      sample_budget,
      [&](std::size_t i) { results[i] = validate_sample(coeffs, cfg, seed, static_cast<std::uint32_t>(i)); },
      workers == 0 ? default_workers() : workers);

  ValidationReport report;
  report.samples = sample_budget;
  for (int slot = 0; slot < 6; ++slot) {
    HypothesisCheck check;
    check.name = kSlotNames[slot];
    for (const auto& r : results) {
      if (r.ratio[slot] > check.worst_ratio || (slot == H1 && r.singular && check.message.empty())) {
        check.worst_ratio = r.ratio[slot];
        check.message = r.where[slot];
      }
    }
    check.passed = check.worst_ratio <= 1.0 + 1e-9;
    if (slot == H1) {
      for (const auto& r : results)
        if (r.singular) {
          check.passed = false;
          check.message = r.singular_where;
          break;
        }
    }
    report.checks.push_back(std::move(check));
  }
  return report;
}

}  // namespace pathlab
