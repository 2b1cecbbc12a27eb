#include "pathlab/simulate.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "pathlab/error.hpp"
#include "pathlab/parallel.hpp"
#include "pathlab/wasserstein.hpp"

namespace pathlab {

Vec euler_update(const Vec& x, const Vec& drift, const Mat& sigma, double h, const Vec& dW, std::uint64_t step) {
  Vec out = x + drift * h + sigma * dW;
  if (!out.allFinite()) fail(ErrorKind::BlowUp, "non-finite state at step " + std::to_string(step));
  return out;
}

PathSegment step_euler(PathSegment seg, const Vec& drift, const Mat& sigma, double h, const Vec& dW) {
  seg.push(euler_update(seg.endpoint(), drift, sigma, h, dW, 0));
  return seg;
}

Vec brownian_increment(const NormalStream& stream, std::uint32_t step, double h, int d) {
  Vec dW(d);
  stream.fill(step, std::span<double>(dW.data(), static_cast<std::size_t>(d)));
  return dW * std::sqrt(h);
}

namespace {

// Segments advance by one grid slot per step, so the time step must be the grid spacing.
void require_grid_step(double h, const PathSpaceConfig& cfg) {
  require(std::abs(h - cfg.h) <= 1e-12 * cfg.h, ErrorKind::Configuration,
          "time step " + std::to_string(h) + " differs from the path grid spacing " + std::to_string(cfg.h));
}

}  // namespace

std::size_t step_count(double h, double T) {
  require(h > 0 && T >= 0 && std::isfinite(T), ErrorKind::Configuration, "need h > 0 and T >= 0");
  const double k = T / h;
  require(std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k), ErrorKind::Configuration,
          "T must be a multiple of h");
  return static_cast<std::size_t>(std::llround(k));
}

std::vector<std::size_t> save_steps(double h, double T, const std::vector<double>& times) {
  const std::size_t total = step_count(h, T);
  std::vector<std::size_t> out;
  for (double t : times) {
    require(t >= 0 && t <= T * (1 + 1e-12), ErrorKind::Configuration, "save time outside [0, T]");
    const double k = t / h;
    require(std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k), ErrorKind::Configuration,
            "save time " + std::to_string(t) + " is not on the step grid");
    out.push_back(std::min<std::size_t>(static_cast<std::size_t>(std::llround(k)), total));
  }
  return out;
}

InitialLaw InitialLaw::point_mass(const PathSegment& seg) { return InitialLaw{seg, 0.0, PathSegment::zero(seg.config())}; }

InitialLaw InitialLaw::gaussian_bridge(const PathSegment& base, double amplitude) {
  require(amplitude >= 0 && std::isfinite(amplitude), ErrorKind::Configuration, "amplitude must be >= 0");
  return InitialLaw{base, amplitude, PathSegment::zero(base.config())};
}

InitialLaw InitialLaw::shifted(const PathSegment& by) const {
  InitialLaw out = *this;
  out.shift += by;
  return out;
}

PathSegment InitialLaw::sample(std::uint64_t seed, std::uint32_t replica, std::uint32_t index) const {
  PathSegment out = base + shift;
  if (deterministic()) return out;
  const auto& cfg = base.config();
  const int d = cfg.d;
  const std::size_t n = cfg.size();
  const NormalStream stream(seed, Stream::InitialLaw, replica, index);
  std::vector<double> z(n * d);
  stream.fill(0, z);
  // z[0..d) is Z; the rest drive the walk that becomes the bridge.
  std::vector<double> walk(n * d, 0.0);
  const double sh = std::sqrt(cfg.h);
  for (std::size_t j = 1; j < n; ++j)
    for (int k = 0; k < d; ++k) walk[j * d + k] = walk[(j - 1) * d + k] + sh * z[j * d + k];
  std::vector<double> values = out.values();
  for (std::size_t j = 0; j < n; ++j) {
    const double frac = static_cast<double>(j) / static_cast<double>(n - 1);
    const double env = amplitude * std::exp(0.25 * cfg.tau * out.time(j));
    for (int k = 0; k < d; ++k) {
      const double bridge = walk[j * d + k] - frac * walk[(n - 1) * d + k];
      values[j * d + k] += env * (z[k] + bridge);
    }
  }
  return PathSegment(cfg, std::move(values));
}

ParticleCloud InitialLaw::cloud(std::uint64_t seed, std::uint32_t replica, std::size_t n) const {
  require(n >= 1, ErrorKind::Configuration, "a cloud needs at least one particle");
  std::vector<PathSegment> parts;
  parts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) parts.push_back(sample(seed, replica, static_cast<std::uint32_t>(i)));
  return ParticleCloud(std::move(parts));
}

PathState simulate_path(const Dynamics& dyn, const PathSegment& xi, const ParticleCloud* law, const PathRunOptions& opts,
                        const std::function<void(double, const PathState&)>& observer) {
  require_grid_step(opts.h, xi.config());
  const std::size_t steps = step_count(opts.h, opts.T);
  const auto saves = save_steps(opts.h, opts.T, opts.save_times);
  const NormalStream stream(opts.seed, Stream::Brownian, opts.replica, opts.particle);
  PathState state = start_state(dyn, xi);
  const int d = dyn.dim();
  std::size_t next_save = 0;
  for (std::size_t k = 0;; ++k) {
    while (next_save < saves.size() && saves[next_save] == k) {
      if (observer) observer(static_cast<double>(k) * opts.h, state);
      ++next_save;
    }
    if (k == steps) break;
    const Vec dW = brownian_increment(stream, static_cast<std::uint32_t>(k), opts.h, d);
    const Vec b = dyn.drift(state.sim, state.original(), law);
    const Mat s = dyn.diffusion(state.sim, state.original());
    push_state(dyn, state, euler_update(state.sim.endpoint(), b, s, opts.h, dW, k));
  }
  return state;
}

namespace {

// Particles of one interacting system, kept in original coordinates (the law argument) and, for
// transformed dynamics, in simulated coordinates.
struct ParticleSystem {
  std::vector<PathSegment> orig;
  std::vector<PathSegment> sim;
  std::vector<double> weights;
  bool uniform = true;
  std::vector<char> exited;

  ParticleSystem(const Dynamics& dyn, const ParticleCloud& init) {
    orig = init.particles();
    weights = init.weights();
    uniform = init.uniform();
    if (dyn.transformed())
      for (const auto& p : orig) sim.push_back(dyn.to_simulated(p));
    exited.assign(orig.size(), 0);
  }

  std::size_t size() const { return orig.size(); }
  std::size_t exits() const { return static_cast<std::size_t>(std::count(exited.begin(), exited.end(), 1)); }

  ParticleCloud borrow() {
    return uniform ? ParticleCloud(std::move(orig)) : ParticleCloud(std::move(orig), weights);
  }
  void give_back(ParticleCloud&& cloud) { orig = std::move(cloud).take_particles(); }
  ParticleCloud snapshot() const { return uniform ? ParticleCloud(orig) : ParticleCloud(orig, weights); }

  const PathSegment& simulated(const ParticleCloud& law, std::size_t i) const { return sim.empty() ? law[i] : sim[i]; }

  // One Euler step with the current cloud as the law (or `law_override` when given).
  void step(const Dynamics& dyn, std::size_t k, double h, std::uint64_t seed, std::uint32_t replica, unsigned workers,
            const ParticleCloud* law_override = nullptr) {
    const int d = dyn.dim();
    const std::size_t n = size();  // borrow() empties orig until give_back()
    std::vector<Vec> next(n);
    {
      ParticleCloud law = borrow();
      const ParticleCloud& arg = law_override ? *law_override : law;
      try {
        parallel_for(
            n,
            [&](std::size_t i) {
              const NormalStream stream(seed, Stream::Brownian, replica, static_cast<std::uint32_t>(i));
              const Vec dW = brownian_increment(stream, static_cast<std::uint32_t>(k), h, d);
              const PathSegment& s = simulated(law, i);
              const Vec b = dyn.drift(s, law[i], &arg);
              const Mat sg = dyn.diffusion(s, law[i]);
              try {
                next[i] = euler_update(s.endpoint(), b, sg, h, dW, k);
              } catch (const Error& e) {
                fail(ErrorKind::BlowUp, std::string(e.what()) + " (particle " + std::to_string(i) + ")");
              }
            },
            workers);
      } catch (...) {
        give_back(std::move(law));
        throw;
      }
      give_back(std::move(law));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (sim.empty()) {
        orig[i].push(next[i]);
      } else {
        const Vec x = dyn.to_original(next[i], orig[i].endpoint());
        if (dyn.outside(x)) exited[i] = 1;
        orig[i].push(x);
        sim[i].push(next[i]);
      }
    }
  }
};

}  // namespace

McKeanResult simulate_mckean(const Dynamics& dyn, const ParticleCloud& init, const McKeanOptions& opts,
                             const std::function<void(double, const ParticleCloud&)>& observer) {
  require(init.config().d == dyn.dim(), ErrorKind::Configuration, "initial cloud has the wrong dimension");
  require_grid_step(opts.h, init.config());
  const std::size_t steps = step_count(opts.h, opts.T);
  const auto saves = save_steps(opts.h, opts.T, opts.save_times);
  ParticleSystem system(dyn, init);
  McKeanResult result;
  std::size_t next_save = 0;
  for (std::size_t k = 0;; ++k) {
    while (next_save < saves.size() && saves[next_save] == k) {
      const double t = static_cast<double>(k) * opts.h;
      result.times.push_back(t);
      if (opts.keep_clouds || observer) {
        ParticleCloud snap = system.snapshot();
        if (observer) observer(t, snap);
        if (opts.keep_clouds) result.clouds.push_back(std::move(snap));
      }
      ++next_save;
    }
    if (k == steps) break;
    system.step(dyn, k, opts.h, opts.seed, opts.replica, opts.workers);
  }
  result.particles_exited = system.exits();
  return result;
}

namespace {

Vec solve_sigma(const Mat& sigma, const Vec& z) {
  if (sigma.rows() == 1) {
    require(std::abs(sigma(0, 0)) > 1e-300, ErrorKind::SingularDiffusion, "sigma is singular at a visited point");
    return z / sigma(0, 0);
  }
  Eigen::FullPivLU<Mat> lu(sigma);
  require(lu.isInvertible(), ErrorKind::SingularDiffusion, "sigma is singular at a visited point");
  return lu.solve(z);
}

enum class Measure { Q, P };

CouplingRun run_coupling(Measure measure, const Dynamics& dyn, const PathSegment& xi, const PathSegment& eta,
                         const CouplingOptions& opts, std::uint32_t replica, const ParticleCloud* law) {
  require(xi.config() == eta.config(), ErrorKind::Configuration, "coupled segments use different grids");
  require(opts.kappa >= 0, ErrorKind::Configuration, "kappa must be nonnegative");
  if (opts.enforce_kappa)
    require(opts.kappa > xi.config().tau, ErrorKind::Configuration,
            "kappa = " + std::to_string(opts.kappa) + " must exceed tau = " + std::to_string(xi.config().tau));
  require_grid_step(opts.h, xi.config());
  const std::size_t steps = step_count(opts.h, opts.T);
  const auto saves = save_steps(opts.h, opts.T, opts.save_times);
  const NormalStream stream(opts.seed, Stream::Brownian, replica, 0);
  const int d = dyn.dim();
  const double h = opts.h, kappa = opts.kappa;

  PathState X = start_state(dyn, xi), Y = start_state(dyn, eta);
  PathSegment z_sim = X.sim - Y.sim;
  std::optional<PathSegment> z_orig;
  if (dyn.transformed()) z_orig = X.original() - Y.original();

  CouplingRun run;
  run.kappa = kappa;
  double half = 0, A = 0, logR = 0;
  std::size_t next_save = 0;
  for (std::size_t k = 0;; ++k) {
    while (next_save < saves.size() && saves[next_save] == k) {
      CouplingSample s;
      s.t = static_cast<double>(k) * h;
      s.z_norm = z_sim.weighted_norm();
      s.z_norm_orig = z_orig ? z_orig->weighted_norm() : s.z_norm;
      s.half_int_gamma_sq = half;
      s.A = A;
      s.log_R = logR;
      s.x_end = X.original().endpoint();
      s.y_end = Y.original().endpoint();
      run.samples.push_back(std::move(s));
      ++next_save;
    }
    if (k == steps) break;
    const Vec dW = brownian_increment(stream, static_cast<std::uint32_t>(k), h, d);
    const Vec bX = dyn.drift(X.sim, X.original(), law), bY = dyn.drift(Y.sim, Y.original(), law);
    const Mat sX = dyn.diffusion(X.sim, X.original()), sY = dyn.diffusion(Y.sim, Y.original());
    const Vec z = X.sim.endpoint() - Y.sim.endpoint();
    const Vec gamma = kappa == 0.0 ? zeros(d) : Vec(kappa * solve_sigma(sX, z));
    if (opts.record_gamma) run.gamma.push_back(gamma);
    const double g2 = gamma.squaredNorm();
    half += 0.5 * g2 * h;
    A += opts.A_coefficient * std::pow(Y.sim.weighted_norm(), opts.alpha) * h;
    Vec x_new, y_new;
    if (measure == Measure::Q) {
      logR += -gamma.dot(dW) + 0.5 * g2 * h;
      x_new = euler_update(X.sim.endpoint(), bX - kappa * z, sX, h, dW, k);
      y_new = euler_update(Y.sim.endpoint(), bY, sY, h, dW, k);
    } else {
      logR += -gamma.dot(dW) - 0.5 * g2 * h;
      x_new = euler_update(X.sim.endpoint(), bX, sX, h, dW, k);
      y_new = euler_update(Y.sim.endpoint(), bY + sY * gamma, sY, h, dW, k);
    }
    if (std::abs(logR) > 700) run.degenerate_weight = true;
    push_state(dyn, X, x_new);
    push_state(dyn, Y, y_new);
    z_sim.push(x_new - y_new);
    if (z_orig) z_orig->push(X.orig->endpoint() - Y.orig->endpoint());
  }
  run.exits = X.exits + Y.exits;
  return run;
}

}  // namespace

CouplingRun simulate_coupled_Q(const Dynamics& dyn, const PathSegment& xi, const PathSegment& eta,
                               const CouplingOptions& opts, std::uint32_t replica, const ParticleCloud* law) {
  return run_coupling(Measure::Q, dyn, xi, eta, opts, replica, law);
}

CouplingRun simulate_coupled_P(const Dynamics& dyn, const PathSegment& xi, const PathSegment& eta,
                               const CouplingOptions& opts, std::uint32_t replica, const ParticleCloud* law) {
  return run_coupling(Measure::P, dyn, xi, eta, opts, replica, law);
}

LawShiftRun simulate_law_shift(const Dynamics& dyn, const InitialLaw& mu0, const InitialLaw& nu0,
                               const LawShiftOptions& opts) {
  require(opts.particles >= 2, ErrorKind::Configuration, "law shift needs at least two particles per cloud");
  require(opts.replicas >= 1, ErrorKind::Configuration, "law shift needs at least one replica");
  require(mu0.base.config() == nu0.base.config(), ErrorKind::Configuration, "initial laws use different grids");
  const auto& cfg = mu0.base.config();
  require(opts.kappa > cfg.tau, ErrorKind::Configuration, "kappa must exceed tau");
  require_grid_step(opts.h, cfg);
  const std::size_t steps = step_count(opts.h, opts.T);
  const auto saves = save_steps(opts.h, opts.T, opts.save_times);
  const CoefficientSet& coeffs = dyn.coefficients();
  const int d = dyn.dim();
  const double h = opts.h, kappa = opts.kappa;

  // Both clouds share initial draws and noise, so mu = nu gives identical cloud trajectories.
  constexpr std::uint32_t kCloudInit = 0xFFFFFF00u, kCloudNoise = 0xFFFFFF10u;
  ParticleSystem mu(dyn, mu0.cloud(opts.seed, kCloudInit, opts.particles));
  ParticleSystem nu(dyn, nu0.cloud(opts.seed, kCloudInit, opts.particles));

  struct Replica {
    PathState ymu, yhat;
    PathSegment z;
    double bar = 0, tilde = 0, entropy = 0, last_bar = 0;
  };
  std::vector<Replica> reps;
  reps.reserve(opts.replicas);
  for (std::size_t r = 0; r < opts.replicas; ++r) {
    const auto rr = static_cast<std::uint32_t>(r);
    PathState a = start_state(dyn, mu0.sample(opts.seed, rr, 0));
    PathState b = start_state(dyn, nu0.sample(opts.seed, rr, 0));
    PathSegment z = a.sim - b.sim;
    reps.push_back(Replica{std::move(a), std::move(b), std::move(z)});
  }

  LawShiftRun run;
  std::vector<double> sigma_bound(opts.replicas, 0.0);
  std::size_t next_save = 0;
  for (std::size_t k = 0;; ++k) {
    const bool saving = next_save < saves.size() && saves[next_save] == k;
    ParticleCloud law_mu = mu.borrow();
    ParticleCloud law_nu = nu.borrow();
    std::vector<Vec> next_a(opts.replicas), next_b(opts.replicas);
    try {
      parallel_for(
          opts.replicas,
          [&](std::size_t r) {
            Replica& rep = reps[r];
            const Vec x = rep.ymu.original().endpoint();
            const Mat right = right_inverse(coeffs.sigma(x));
            sigma_bound[r] = std::max(sigma_bound[r], operator_norm(right));
            const Vec bar =
                right * (coeffs.b1(rep.ymu.original(), &law_mu) - coeffs.b1(rep.ymu.original(), &law_nu));
            rep.last_bar = bar.norm();
            if (k == steps) return;
            const Mat sA = dyn.diffusion(rep.ymu.sim, rep.ymu.original());
            const Mat sB = dyn.diffusion(rep.yhat.sim, rep.yhat.original());
            const Vec z = rep.ymu.sim.endpoint() - rep.yhat.sim.endpoint();
            const Vec tilde = kappa * solve_sigma(sA, z);
            rep.bar += bar.squaredNorm() * h;
            rep.tilde += tilde.squaredNorm() * h;
            rep.entropy += 0.5 * (bar + tilde).squaredNorm() * h;
            const NormalStream stream(opts.seed, Stream::Brownian, static_cast<std::uint32_t>(r), 0);
            const Vec dW = brownian_increment(stream, static_cast<std::uint32_t>(k), h, d);
            const Vec bA = dyn.drift(rep.ymu.sim, rep.ymu.original(), &law_nu);
            const Vec bB = dyn.drift(rep.yhat.sim, rep.yhat.original(), &law_nu);
            next_a[r] = euler_update(rep.ymu.sim.endpoint(), bA - kappa * z, sA, h, dW, k);
            next_b[r] = euler_update(rep.yhat.sim.endpoint(), bB, sB, h, dW, k);
          },
          opts.workers);
    } catch (...) {
      mu.give_back(std::move(law_mu));
      nu.give_back(std::move(law_nu));
      throw;
    }
    if (saving) {
      LawShiftSample s;
      s.t = static_cast<double>(k) * h;
      s.w2 = wk_truncated(law_mu, law_nu, 2.0, cfg.T_mem).value;
      const double c1 = *std::max_element(sigma_bound.begin(), sigma_bound.end());
      std::vector<double> bar(opts.replicas), tilde(opts.replicas), ent(opts.replicas), zn(opts.replicas);
      for (std::size_t r = 0; r < opts.replicas; ++r) {
        s.max_bar_zeta = std::max(s.max_bar_zeta, reps[r].last_bar);
        bar[r] = reps[r].bar;
        tilde[r] = reps[r].tilde;
        ent[r] = reps[r].entropy;
        zn[r] = reps[r].z.weighted_norm();
      }
      const double allowed = c1 * coeffs.K1 * s.w2;
      s.bar_zeta_ratio = s.max_bar_zeta == 0.0 ? 0.0 : (allowed > 0 ? s.max_bar_zeta / allowed : INFINITY);
      s.int_bar_zeta_sq = mean_estimate(bar);
      s.int_tilde_zeta_sq = mean_estimate(tilde);
      s.entropy = mean_estimate(ent);
      s.z_norm = mean_estimate(zn);
      run.samples.push_back(s);
      ++next_save;
    }
    mu.give_back(std::move(law_mu));
    nu.give_back(std::move(law_nu));
    if (k == steps) break;
    for (std::size_t r = 0; r < opts.replicas; ++r) {
      push_state(dyn, reps[r].ymu, next_a[r]);
      push_state(dyn, reps[r].yhat, next_b[r]);
      reps[r].z.push(next_a[r] - next_b[r]);
    }
    mu.step(dyn, k, h, opts.seed, kCloudNoise, opts.workers);
    nu.step(dyn, k, h, opts.seed, kCloudNoise, opts.workers);
  }
  run.sigma_inverse_bound = *std::max_element(sigma_bound.begin(), sigma_bound.end());
  return run;
}

ExpMoment exp_moment_A(std::span<const CouplingRun> runs, double beta) {
  require(!runs.empty(), ErrorKind::Precondition, "no runs");
  const std::size_t m = runs.front().samples.size();
  for (const auto& r : runs)
    require(r.samples.size() == m, ErrorKind::Precondition, "runs have different save grids");
  ExpMoment out;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> w(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) w[i] = std::exp(beta * runs[i].samples[j].A);
    out.times.push_back(runs.front().samples[j].t);
    out.value.push_back(mean_estimate(w));
    const double ess = effective_sample_size(w);
    out.ess.push_back(ess);
    if (ess < 10) out.unreliable = true;
  }
  return out;
}

}  // namespace pathlab
