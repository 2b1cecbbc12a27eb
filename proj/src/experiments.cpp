#include "pathlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "pathlab/error.hpp"
#include "pathlab/rng.hpp"
#include "pathlab/wasserstein.hpp"

namespace pathlab {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

Verdict combine(Verdict a, Verdict b) {
  if (a == Verdict::Fail || b == Verdict::Fail) return Verdict::Fail;
  if (a == Verdict::Inconclusive || b == Verdict::Inconclusive) return Verdict::Inconclusive;
  return Verdict::Pass;
}

Lab make_lab(const ExperimentConfig& config) { return make_lab(config, config.build_coefficients()); }

Lab make_lab(const ExperimentConfig& config, CoefficientSet coeffs) {
  config.validate();
  Lab lab;
  lab.config = config;
  lab.cfg = config.path();
  lab.coeffs = std::move(coeffs);
  require(lab.coeffs.d == lab.cfg.d, ErrorKind::Configuration, "coefficient dimension does not match path.d");
  if (!lab.coeffs.b0_vanishes) {
    const EllipticGrid grid = EllipticGrid::make(lab.cfg.d, config.zvonkin_L, config.zvonkin_dx);
    SelectedMap sel =
        select_lambda(lab.coeffs, grid, default_lambda_grid(b0_sup_on_grid(lab.coeffs, grid)), lab.workers());
    lab.map = std::make_shared<const ZvonkinMap>(std::move(sel.map));
    lab.sweep = std::move(sel.sweep);
  }
  lab.dyn = make_dynamics(lab.coeffs, lab.map);
  return lab;
}

// ---- test functions ----

TestFunction TestFunction::make(const PathSpaceConfig& cfg, Profile profile, double amplitude, const Vec& direction,
                                double offset) {
  require(direction.size() == cfg.d && direction.norm() > 0, ErrorKind::Configuration, "bad test-function direction");
  require(std::isfinite(amplitude) && amplitude >= 0, ErrorKind::Configuration, "amplitude must be >= 0");
  double lip = 1.0;
  if (profile == Profile::Memory) {
    // tau * trapezoid sum of e^{2 tau s} e^{-tau s}
    const SegmentKernel kernel(cfg);
    lip = 0.0;
    const std::size_t n = cfg.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (i == 0 || i + 1 == n) ? 0.5 * cfg.h : cfg.h;
      lip += w * kernel.memory_exp[i] / kernel.norm_weight[i];
    }
    lip *= cfg.tau;
  }
  return TestFunction(cfg, profile, amplitude, direction.normalized(), offset, lip, 0.0);
}

TestFunction TestFunction::constant(const PathSpaceConfig& cfg, double value) {
  require(value > 0, ErrorKind::Configuration, "a test function must be positive");
  return TestFunction(cfg, Profile::Constant, 0.0, unit(cfg.d, 0), 0.0, 0.0, std::log(value));
}

TestFunction TestFunction::from_config(const Lab& lab) {
  const auto profile = lab.config.testfn_profile == "memory" ? Profile::Memory : Profile::Endpoint;
  const Vec v = unit(lab.cfg.d, 0);
  double offset = v.dot(lab.coeffs.center);
  if (profile == Profile::Memory) offset *= lab.cfg.tau * PathSegment::zero(lab.cfg).memory_mass();
  return make(lab.cfg, profile, lab.config.testfn_amplitude, v, offset);
}

double TestFunction::inner(const PathSegment& seg) const {
  switch (profile_) {
    case Profile::Endpoint: return v_.dot(seg.endpoint());
    case Profile::Memory: return cfg_.tau * v_.dot(seg.memory_integral());
    case Profile::Constant: return 0.0;
  }
  return 0.0;
}

double TestFunction::log_f(const PathSegment& seg) const {
  if (profile_ == Profile::Constant) return constant_;
  return amplitude_ * std::tanh(inner(seg) - offset_);
}

std::string TestFunction::describe() const {
  std::ostringstream os;
  switch (profile_) {
    case Profile::Constant: os << "constant " << std::exp(constant_); break;
    case Profile::Endpoint: os << "exp(" << amplitude_ << " tanh(v.xi(0) - " << offset_ << "))"; break;
    case Profile::Memory: os << "exp(" << amplitude_ << " tanh(tau v.int e^{2 tau s} xi - " << offset_ << "))"; break;
  }
  return os.str();
}

double TestFunction::certify(std::size_t samples, std::uint64_t seed) const {
  double worst = 0.0;
  const double scales[3] = {1e-3, 1e-1, 1.0};
  const Vec center = offset_ * v_ / (profile_ == Profile::Memory ? lipschitz_ : 1.0);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto r = static_cast<std::uint32_t>(i);
    const PathSegment a = random_segment(cfg_, center, 1.0, seed, r, 0);
    const PathSegment dir = random_segment(cfg_, zeros(cfg_.d), 1.0, seed, r, 1);
    const PathSegment b = a + scales[i % 3] * dir;
    const double dist = weighted_norm(a - b);
    if (dist > 0) worst = std::max(worst, std::abs(log_f(a) - log_f(b)) / dist);
  }
  return worst;
}

// ---- pairs ----

namespace {

constexpr double kDistances[6] = {0.25, 0.5, 1.0, 0.35, 0.7, 1.4};
constexpr double kShapes[6] = {0.0, 0.3, 0.6, 0.9, 0.15, 0.45};

std::pair<PathSegment, PathSegment> point_pair(const Lab& lab, std::size_t j, std::uint32_t salt) {
  const auto& cfg = lab.cfg;
  const PathSegment xi = random_segment(cfg, lab.coeffs.center, 0.5, lab.config.seed, 0x10000u + 1000u * salt + j, 0);
  // Direction e^{-rho tau s} u: unit weighted norm attained at s = 0. Both grids use the same shapes,
  // signs and distances; the held-out grid differs in its base points.
  const double rho = kShapes[j % 6];
  Vec u = unit(cfg.d, static_cast<int>(j % cfg.d));
  if ((j / 2) % 2 == 1) u = -u;
  PathSegment dir = PathSegment::from_function(cfg, [&](double s) { return Vec(std::exp(-rho * cfg.tau * s) * u); });
  const double dist = kDistances[j % 6];
  return {xi, xi + dist * dir};
}

}  // namespace

std::vector<PairSpec> make_point_pairs(const Lab& lab, std::size_t count, std::uint32_t salt) {
  std::vector<PairSpec> out;
  for (std::size_t j = 0; j < count; ++j) {
    auto [xi, eta] = point_pair(lab, j, salt);
    const double dist = weighted_norm(eta - xi);
    out.push_back(PairSpec{"g" + std::to_string(salt) + "-" + std::to_string(j), InitialLaw::point_mass(xi),
                           InitialLaw::point_mass(eta), dist});
  }
  return out;
}

std::vector<PairSpec> make_law_pairs(const Lab& lab, std::size_t count, std::uint32_t salt, double amplitude) {
  std::vector<PairSpec> out;
  for (std::size_t j = 0; j < count; ++j) {
    auto [xi, eta] = point_pair(lab, j, salt);
    const InitialLaw mu = InitialLaw::gaussian_bridge(xi, amplitude);
    out.push_back(PairSpec{"law" + std::to_string(salt) + "-" + std::to_string(j), mu, mu.shifted(eta - xi),
                           weighted_norm(eta - xi)});
  }
  return out;
}

std::vector<double> uniform_times(double T, double step) {
  require(step > 0 && T >= 0, ErrorKind::Configuration, "bad save grid");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::llround(T / step));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(std::min(T, static_cast<double>(i) * step));
  return out;
}

namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint32_t purpose) {
  // Distinct purposes get unrelated keys.
  const auto out = Philox4x32::generate({purpose, 0xA5A5A5A5u, 0, 0},
                                        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct CouplingBatch {
  std::vector<CouplingRun> runs;
  std::size_t blowups = 0;
};

CouplingBatch coupling_batch(const Lab& lab, const PathSegment& xi, const PathSegment& eta, std::size_t replicas,
                             const std::vector<double>& times, std::uint64_t seed) {
  lab.config.require_kappa();
  CouplingOptions o;
  o.kappa = lab.config.kappa;
  o.h = lab.config.h;
  o.T = lab.config.T;
  o.seed = seed;
  o.save_times = times;
  o.alpha = lab.coeffs.alpha;
  // Both paths see the same frozen law; the law term then cancels in the difference.
  const ParticleCloud law = ParticleCloud::point_mass(xi);
  std::vector<std::optional<CouplingRun>> slots(replicas);
  std::vector<std::string> errors(replicas);
  parallel_for(
      replicas,
      [&](std::size_t r) {
        try {
          slots[r] = simulate_coupled_Q(*lab.dyn, xi, eta, o, static_cast<std::uint32_t>(r), &law);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::BlowUp) throw;
          errors[r] = e.what();
        }
      },
      lab.workers());
  CouplingBatch out;
  std::string first;
  for (std::size_t r = 0; r < replicas; ++r) {
    if (slots[r]) {
      out.runs.push_back(std::move(*slots[r]));
    } else {
      if (first.empty()) first = "replica " + std::to_string(r) + ": " + errors[r];
      ++out.blowups;
    }
  }
  require(out.blowups * 100 <= replicas, ErrorKind::BlowUp,
          std::to_string(out.blowups) + " of " + std::to_string(replicas) + " replicas blew up; first: " + first);
  return out;
}

std::size_t time_index(const std::vector<double>& times, double t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs(times[i] - t) < std::abs(times[best] - t)) best = i;
  return best;
}

// Values of `fn` at each save time for R samples started from `law`; sample i draws its initial
// segment with (init_seed, tag, i) and its noise from stream (noise_seed, tag, i), so path and
// interacting modes consume identical randomness.
std::vector<std::vector<double>> sample_functional(const Lab& lab, const InitialLaw& law, std::uint64_t init_seed,
                                                   std::uint64_t noise_seed, std::uint32_t tag, std::size_t R,
                                                   const std::vector<double>& times, bool interacting,
                                                   const std::function<double(const PathSegment&)>& fn) {
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(R));
  const double T = times.empty() ? 0.0 : *std::max_element(times.begin(), times.end());
  if (interacting) {
    McKeanOptions o;
    o.h = lab.config.h;
    o.T = T;
    o.seed = noise_seed;
    o.replica = tag;
    o.save_times = times;
    o.keep_clouds = false;
    o.workers = lab.workers();
    std::size_t j = 0;
    simulate_mckean(*lab.dyn, law.cloud(init_seed, tag, R), o, [&](double, const ParticleCloud& cloud) {
      for (std::size_t i = 0; i < R; ++i) out[j][i] = fn(cloud[i]);
      ++j;
    });
    return out;
  }
  require(lab.coeffs.K1 == 0.0, ErrorKind::Configuration, "independent paths need coefficients without law dependence");
  parallel_for(
      R,
      [&](std::size_t i) {
        const PathSegment xi = law.sample(init_seed, tag, static_cast<std::uint32_t>(i));
        const ParticleCloud frozen = ParticleCloud::point_mass(xi);
        PathRunOptions o;
        o.h = lab.config.h;
        o.T = T;
        o.seed = noise_seed;
        o.replica = tag;
        o.particle = static_cast<std::uint32_t>(i);
        o.save_times = times;
        std::size_t j = 0;
        simulate_path(*lab.dyn, xi, &frozen, o, [&](double, const PathState& s) { out[j++][i] = fn(s.original()); });
      },
      lab.workers());
  return out;
}

Estimate difference(const Estimate& a, const Estimate& b) {
  return Estimate{a.mean - b.mean, std::hypot(a.std_error, b.std_error), std::min(a.count, b.count)};
}

}  // namespace

// ---- decay ----

DecayReport run_decay(const Lab& lab, const PathSegment& xi, const PathSegment& eta, const DecayOptions& opts) {
  lab.config.require_kappa();
  DecayReport rep;
  rep.coefficients = lab.coeffs.name;
  rep.kappa = lab.config.kappa;
  rep.tau0 = lab.config.tau0;
  rep.h = lab.config.h;
  rep.truncation_factor = lab.cfg.truncation_factor();
  rep.distance = weighted_norm(xi - eta);
  rep.replicas = opts.replicas ? opts.replicas : lab.config.N_replicas;
  rep.times = uniform_times(lab.config.T, opts.save_step);

  const CouplingBatch batch = coupling_batch(lab, xi, eta, rep.replicas, rep.times, derived_seed(lab.config.seed, 1));
  rep.blowups = batch.blowups;
  const std::size_t n = batch.runs.size();

  std::vector<double> z1(rep.times.size(), 0.0);
  for (double p : opts.powers) {
    std::vector<Estimate> row;
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
      std::vector<double> v(n);
      for (std::size_t r = 0; r < n; ++r) v[r] = std::pow(batch.runs[r].samples[j].z_norm, p);
      row.push_back(mean_estimate(v));
    }
    rep.moments.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < rep.times.size(); ++j) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = batch.runs[r].samples[j].z_norm_orig;
    z1[j] = mean_estimate(v).mean;
  }

  rep.degenerate = rep.distance == 0.0;
  if (rep.degenerate) {
    for (double p : opts.powers) rep.fits.push_back(DecayFit{p, {}, -p * rep.tau0, true});
    return rep;
  }
  for (std::size_t j = 0; j < rep.times.size(); ++j)
    rep.gradient_constant =
        std::max(rep.gradient_constant, z1[j] / (std::exp(-rep.tau0 * rep.times[j]) * rep.distance));

  for (std::size_t k = 0; k < opts.powers.size(); ++k) {
    const double p = opts.powers[k];
    std::vector<double> x, y, s;
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
      const double t = rep.times[j];
      const Estimate& e = rep.moments[k][j];
      if (t < 0.25 * lab.config.T || e.mean <= 0) continue;
      x.push_back(t);
      y.push_back(std::log(e.mean));
      s.push_back(std::max(e.std_error / e.mean, 1e-12));
    }
    DecayFit fit{p, {}, -p * rep.tau0, false};
    require(x.size() >= 2, ErrorKind::Precondition, "decay fit needs at least two save times in [T/4, T]");
    fit.fit = fit_line(x, y, s);
    fit.passed = fit.fit.slope <= fit.threshold + 2.0 * fit.fit.slope_stderr;
    if (!fit.passed) rep.verdict = Verdict::Fail;
    rep.fits.push_back(fit);
  }
  return rep;
}

DecayReport run_decay(const Lab& lab, const DecayOptions& opts) {
  const auto pairs = make_point_pairs(lab, 3, 0);
  return run_decay(lab, pairs[2].mu.base, pairs[2].nu.base, opts);
}

// ---- entropy ----

double EntropyReport::lambda_at(const PathSegment& xi, double alpha) const {
  return c * std::exp(delta * std::pow(weighted_norm(xi), 2 * alpha));
}

EntropyPoint entropy_point(const Lab& lab, const PathSegment& xi, const PathSegment& eta, std::size_t replicas,
                           const std::vector<double>& times, std::size_t* blowups) {
  const CouplingBatch batch = coupling_batch(lab, xi, eta, replicas, times, derived_seed(lab.config.seed, 2));
  if (blowups) *blowups += batch.blowups;
  EntropyPoint pt;
  pt.distance = weighted_norm(xi - eta);
  pt.weight = std::exp(lab.config.delta * std::pow(weighted_norm(eta), 2 * lab.coeffs.alpha));
  const std::size_t n = batch.runs.size();
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = batch.runs[r].samples[j].half_int_gamma_sq;
    pt.H.push_back(mean_estimate(v));
    if (j > 0 && pt.H[j].mean < pt.H[j - 1].mean) pt.monotone = false;
  }
  const std::size_t last = times.size() - 1, half = time_index(times, 0.5 * times.back());
  std::vector<double> gap(n);
  for (std::size_t r = 0; r < n; ++r)
    gap[r] = batch.runs[r].samples[last].half_int_gamma_sq - batch.runs[r].samples[half].half_int_gamma_sq;
  pt.plateau_gap = mean_estimate(gap);
  pt.plateau = pt.plateau_gap.mean <= 3.0 * pt.plateau_gap.std_error + 0.05 * pt.H[last].mean;
  pt.required_c = pt.distance > 0 ? pt.H[last].mean / (pt.weight * pt.distance * pt.distance) : 0.0;
  return pt;
}

EntropyReport run_entropy(const Lab& lab, const EntropyOptions& opts) {
  EntropyReport rep;
  rep.coefficients = lab.coeffs.name;
  rep.kappa = lab.config.kappa;
  rep.h = lab.config.h;
  rep.delta = lab.config.delta;
  rep.truncation_factor = lab.cfg.truncation_factor();
  rep.replicas = opts.replicas ? opts.replicas : lab.config.N_replicas;
  rep.times = uniform_times(lab.config.T, opts.save_step);
  for (int grid = 0; grid < 2; ++grid) {
    for (const auto& pair : make_point_pairs(lab, opts.pairs, static_cast<std::uint32_t>(grid))) {
      EntropyPoint pt = entropy_point(lab, pair.mu.base, pair.nu.base, rep.replicas, rep.times, &rep.blowups);
      pt.label = pair.label;
      (grid == 0 ? rep.training : rep.held_out).push_back(std::move(pt));
    }
  }
  for (const auto& pt : rep.training) rep.c = std::max(rep.c, pt.required_c);
  for (auto& pt : rep.held_out) {
    const Estimate& H = pt.H.back();
    pt.margin = rep.c * pt.weight * pt.distance * pt.distance + 3.0 * H.std_error - H.mean;
    if (pt.margin < -1e-9 * std::max(1.0, H.mean)) rep.validated = false;
  }
  bool shape = true;
  for (const auto* grid : {&rep.training, &rep.held_out})
    for (const auto& pt : *grid) shape = shape && pt.monotone && pt.plateau;
  rep.verdict = (shape && rep.validated) ? Verdict::Pass : Verdict::Fail;
  return rep;
}

// ---- asymptotic log-Harnack ----

AlhReport run_alh(const Lab& lab, const TestFunction& f, const std::vector<PairSpec>& training,
                  const std::vector<PairSpec>& held_out, const AlhOptions& opts) {
  require(!opts.times.empty(), ErrorKind::Configuration, "no evaluation times");
  AlhReport rep;
  rep.coefficients = lab.coeffs.name;
  rep.mode = opts.interacting ? "laws" : "paths";
  rep.tau0 = lab.config.tau0;
  rep.h = lab.config.h;
  rep.grad_log_f = f.grad_log_bound();
  rep.truncation_factor = lab.cfg.truncation_factor();
  rep.replicas = opts.replicas ? opts.replicas : lab.config.N_replicas;
  rep.times = opts.times;
  std::sort(rep.times.begin(), rep.times.end());

  const std::uint64_t init_a = derived_seed(lab.config.seed, 11), init_c = derived_seed(lab.config.seed, 12);
  const std::uint64_t noise_a = derived_seed(lab.config.seed, 13), noise_c = derived_seed(lab.config.seed, 14);
  auto logf = [&](const PathSegment& s) { return f.log_f(s); };
  auto fval = [&](const PathSegment& s) { return f(s); };

  auto evaluate = [&](const PairSpec& pair, std::uint32_t tag) {
    const std::size_t R = rep.replicas;
    // eta (nu) and xi (mu) with shared randomness, then xi again with independent randomness.
    const auto A = sample_functional(lab, pair.nu, init_a, noise_a, tag, R, rep.times, opts.interacting, logf);
    const auto B = sample_functional(lab, pair.mu, init_a, noise_a, tag, R, rep.times, opts.interacting, logf);
    const auto C = sample_functional(lab, pair.mu, init_c, noise_c, tag, R, rep.times, opts.interacting, fval);
    std::vector<AlhPoint> pts;
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
      AlhPoint pt;
      pt.label = pair.label;
      pt.t = rep.times[j];
      pt.distance = pair.distance;
      pt.lhs = mean_estimate(A[j]);
      pt.rhs0 = log_mean_estimate(C[j]);
      pt.defect = difference(pt.lhs, pt.rhs0);
      std::vector<double> diff(R);
      for (std::size_t i = 0; i < R; ++i) diff[i] = A[j][i] - B[j][i];
      pt.excess = mean_estimate(diff);
      pt.bound_shape = pt.distance * pt.distance + std::exp(-rep.tau0 * pt.t) * rep.grad_log_f * pt.distance;
      if (pt.defect.mean > 0) pt.required_c = pt.bound_shape > 0 ? pt.defect.mean / pt.bound_shape : INFINITY;
      pt.noisy = std::max(pt.lhs.std_error, pt.rhs0.std_error) > 0.1 * std::abs(pt.defect.mean);
      pts.push_back(pt);
    }
    return pts;
  };

  std::uint32_t tag = 1000;
  std::vector<std::vector<AlhPoint>> curves;
  for (const auto& pair : training) {
    auto pts = evaluate(pair, tag++);
    for (const auto& pt : pts) rep.c = std::max(rep.c, pt.required_c);
    rep.training.insert(rep.training.end(), pts.begin(), pts.end());
    curves.push_back(std::move(pts));
  }
  for (const auto& pair : held_out) {
    auto pts = evaluate(pair, tag++);
    for (auto& pt : pts) {
      pt.margin = rep.c * pt.bound_shape + 3.0 * pt.defect.std_error - pt.defect.mean;
      if (pt.margin < 0) ++(pt.noisy ? rep.noisy_violations : rep.violations);
    }
    rep.held_out.insert(rep.held_out.end(), pts.begin(), pts.end());
    curves.push_back(std::move(pts));
  }

  // Only the positive part of the excess is constrained; fit its decay where it is measurable.
  for (const auto& curve : curves) {
    std::vector<double> x, y, s;
    for (const auto& pt : curve) {
      if (pt.excess.mean > 3.0 * pt.excess.std_error && pt.excess.mean > 0) {
        x.push_back(pt.t);
        y.push_back(std::log(pt.excess.mean));
        s.push_back(pt.excess.std_error / pt.excess.mean);
      }
    }
    if (x.size() < 2) continue;
    const LineFit fit = fit_line(x, y, s);
    rep.excess_rates.push_back(fit.slope);
    rep.excess_rate_stderr.push_back(fit.slope_stderr);
    if (fit.slope > -rep.tau0 + 2.0 * fit.slope_stderr) rep.excess_passed = false;
  }
  rep.excess_degenerate = rep.excess_rates.empty();

  if (rep.violations > 0 || !rep.excess_passed) rep.verdict = Verdict::Fail;
  else if (rep.noisy_violations > 0) rep.verdict = Verdict::Inconclusive;
  return rep;
}

// ---- W2 growth ----

namespace {

// Smallest c >= 0 with c e^{c t} >= r.
double envelope_constant(double r, double t) {
  if (r <= 0) return 0.0;
  double lo = 0.0, hi = std::max(1.0, r);
  while (hi * std::exp(hi * t) < r) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid * t) >= r ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

GrowthCurve growth_curve(const Lab& lab, const InitialLaw& mu, const InitialLaw& nu, std::size_t particles,
                         std::size_t repeats, const std::vector<double>& times) {
  require(repeats >= 2, ErrorKind::Configuration, "growth needs at least two repeats for error bars");
  GrowthCurve curve;
  curve.particles = particles;
  const double eps = lab.epsilon();
  const double T = times.back();
  std::vector<std::vector<double>> w2(times.size(), std::vector<double>(repeats));
  std::vector<double> init(repeats);
  const std::uint64_t init_seed = derived_seed(lab.config.seed, 21), noise = derived_seed(lab.config.seed, 22);
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto tag = static_cast<std::uint32_t>(2000 + r);
    McKeanOptions o;
    o.h = lab.config.h;
    o.T = T;
    o.seed = noise;
    o.save_times = times;
    o.keep_clouds = true;
    o.workers = lab.workers();
    // Both systems see the same initial draws and noise, so equal laws give identical clouds and the
    // empirical W2 has no N^{-1/2} floor from independent sampling.
    o.replica = static_cast<std::uint32_t>(3000 + r);
    const McKeanResult a = simulate_mckean(*lab.dyn, mu.cloud(init_seed, tag, particles), o);
    const McKeanResult b = simulate_mckean(*lab.dyn, nu.cloud(init_seed, tag, particles), o);
    init[r] = wk_full(a.clouds.front(), b.clouds.front(), 2.0 + eps).value;
    for (std::size_t j = 0; j < times.size(); ++j) w2[j][r] = wk_full(a.clouds[j], b.clouds[j], 2.0).value;
  }
  curve.initial = mean_estimate(init);
  std::vector<double> x, y, s;
  for (std::size_t j = 0; j < times.size(); ++j) {
    curve.w2.push_back(mean_estimate(w2[j]));
    const Estimate& e = curve.w2.back();
    if (curve.initial.mean > 0) curve.c0 = std::max(curve.c0, envelope_constant(e.mean / curve.initial.mean, times[j]));
    if (e.mean > 0) {
      x.push_back(times[j]);
      y.push_back(std::log(e.mean));
      s.push_back(std::max(e.std_error / e.mean, 1e-12));
    }
  }
  if (x.size() >= 2) {
    const LineFit fit = fit_line(x, y, s);
    curve.log_slope = {fit.slope, fit.slope_stderr};
  }
  return curve;
}

GrowthReport run_w2_growth(const Lab& lab, const InitialLaw& mu, const InitialLaw& nu, const GrowthOptions& opts) {
  GrowthReport rep;
  rep.coefficients = lab.coeffs.name;
  rep.h = lab.config.h;
  rep.epsilon = lab.epsilon();
  rep.truncation_factor = lab.cfg.truncation_factor();
  rep.repeats = opts.repeats;
  rep.times = uniform_times(lab.config.T, opts.save_step);
  const std::size_t N = opts.particles ? opts.particles : lab.config.N_particles;
  rep.base = growth_curve(lab, mu, nu, N, opts.repeats, rep.times);
  rep.doubled = growth_curve(lab, mu, nu, 2 * N, opts.repeats, rep.times);
  rep.c0_change = rep.base.c0 > 0 ? std::abs(rep.doubled.c0 - rep.base.c0) / rep.base.c0 : 0.0;
  for (std::size_t j = 0; j < rep.times.size(); ++j) {
    const double env = rep.base.c0 * std::exp(rep.base.c0 * rep.times[j]) * rep.doubled.initial.mean;
    const Estimate& e = rep.doubled.w2[j];
    if (e.mean - 3.0 * e.std_error > env) ++rep.violations;
  }
  bool slope_ok = true;
  for (const GrowthCurve* c : {&rep.base, &rep.doubled})
    if (!c->log_slope.empty()) slope_ok = slope_ok && c->log_slope[0] <= rep.base.c0 + 2.0 * c->log_slope[1];
  rep.verdict = (rep.c0_change < 0.25 && rep.violations == 0 && slope_ok) ? Verdict::Pass : Verdict::Fail;
  return rep;
}

// ---- gradient estimate ----

GradientReport run_gradient_estimate(const Lab& lab, const TestFunction& f, const EntropyReport& entropy,
                                     const DecayReport& decay, const GradientOptions& opts) {
  GradientReport rep;
  rep.coefficients = lab.coeffs.name;
  rep.function = f.describe();
  rep.tau0 = lab.config.tau0;
  rep.h = lab.config.h;
  rep.grad_f = f.grad_bound();
  rep.replicas = opts.replicas ? opts.replicas : lab.config.N_replicas;
  rep.gamma_constant = decay.gradient_constant;

  const PathSegment xi = make_point_pairs(lab, 1, 0).front().mu.base;
  rep.lambda_hat = entropy.lambda_at(xi, lab.coeffs.alpha);
  const PathSegment v = PathSegment::constant(lab.cfg, unit(lab.cfg.d, 0));
  std::vector<double> times = opts.times;
  std::sort(times.begin(), times.end());
  const bool interacting = lab.coeffs.K1 != 0.0;
  const std::uint64_t init = derived_seed(lab.config.seed, 31), noise = derived_seed(lab.config.seed, 32);
  auto fval = [&](const PathSegment& s) { return f(s); };
  const std::uint32_t tag = 4000;
  const std::size_t R = rep.replicas;
  const auto base = sample_functional(lab, InitialLaw::point_mass(xi), init, noise, tag, R, times, interacting, fval);

  rep.min_margin = INFINITY;
  for (double step : opts.steps) {
    const PathSegment eta = xi + step * v;
    const double dist = weighted_norm(eta - xi);
    const auto moved = sample_functional(lab, InitialLaw::point_mass(eta), init, noise, tag, R, times, interacting, fval);
    for (std::size_t j = 0; j < times.size(); ++j) {
      GradientPoint pt;
      pt.t = times[j];
      pt.step = step;
      std::vector<double> diff(R), sq(R);
      const Estimate m = mean_estimate(base[j]);
      for (std::size_t i = 0; i < R; ++i) {
        diff[i] = base[j][i] - moved[j][i];
        sq[i] = (base[j][i] - m.mean) * (base[j][i] - m.mean);
      }
      const Estimate d = mean_estimate(diff);
      pt.quotient = Estimate{std::abs(d.mean) / dist, d.std_error / dist, d.count};
      pt.variance = mean_estimate(sq);
      const double gamma_t = rep.gamma_constant * std::exp(-rep.tau0 * pt.t);
      pt.rhs = std::sqrt(2.0 * rep.lambda_hat * pt.variance.mean) + rep.grad_f * gamma_t;
      pt.margin = pt.rhs - pt.quotient.mean;
      pt.noisy = pt.quotient.mean < 3.0 * pt.quotient.std_error;
      rep.min_margin = std::min(rep.min_margin, pt.margin);
      if (pt.margin < 0) rep.verdict = combine(rep.verdict, pt.noisy ? Verdict::Inconclusive : Verdict::Fail);
      rep.points.push_back(pt);
    }
  }
  return rep;
}

}  // namespace pathlab
