#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "pathlab/coefficients.hpp"
#include "pathlab/dynamics.hpp"
#include "pathlab/error.hpp"
#include "pathlab/simulate.hpp"
#include "pathlab/stats.hpp"

using namespace pathlab;

namespace {

const PathSpaceConfig kCfg = PathSpaceConfig::make(1, 1.0, 0.01, 2);

CoefficientSet linear(const PathSpaceConfig& cfg, double drift, double memory = 0.0, double law = 0.0, double sigma = 1.0) {
  const int d = cfg.d;
  return linear_coefficients({drift * identity(d), memory * identity(d), law * identity(d), sigma * identity(d)}, cfg);
}

std::vector<double> endpoints(const ParticleCloud& c, int component = 0) {
  std::vector<double> out;
  for (const auto& p : c.particles()) out.push_back(p.endpoint()(component));
  return out;
}

// Mean equation of the linear builtin, m'(t) = (k1 - theta) m(t) + beta \int_{-T_mem}^0 e^{2 tau s} m(t+s) ds,
// integrated with a fine explicit step (Heun) and trapezoid memory on the fine grid.
double linear_mean_oracle(double theta, double beta, double k1, double tau, double T_mem,
                          const std::function<double(double)>& history, double T) {
  const double dt = 1e-4;
  const auto lag = static_cast<std::size_t>(std::llround(T_mem / dt));
  const auto steps = static_cast<std::size_t>(std::llround(T / dt));
  std::vector<double> m(lag + steps + 1);
  for (std::size_t i = 0; i <= lag; ++i) m[i] = history(-T_mem + static_cast<double>(i) * dt);
  std::vector<double> w(lag + 1);
  for (std::size_t j = 0; j <= lag; ++j)
    w[j] = ((j == 0 || j == lag) ? 0.5 : 1.0) * dt * std::exp(2 * tau * (-T_mem + static_cast<double>(j) * dt));
  auto rhs = [&](std::size_t now, double endpoint) {
    double mem = 0.0;
    for (std::size_t j = 0; j < lag; ++j) mem += w[j] * m[now - lag + j];
    mem += w[lag] * endpoint;
    return (k1 - theta) * endpoint + beta * mem;
  };
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t now = lag + k;
    const double f0 = rhs(now, m[now]);
    const double pred = m[now] + dt * f0;
    m[now + 1] = pred;  // the memory for the corrector sees the predicted endpoint
    const double f1 = rhs(now + 1, pred);
    m[now + 1] = m[now] + 0.5 * dt * (f0 + f1);
  }
  return m.back();
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("euler step trivial cases") {
    const PathSegment seg = PathSegment::constant(kCfg, Vec::Constant(1, 1.5));
    const PathSegment still = step_euler(seg, Vec::Zero(1), Mat::Zero(1, 1), 0.01, Vec::Constant(1, 0.7));
    for (std::size_t i = 0; i < still.size(); ++i) CHECK(still(i, 0) == 1.5);
    const PathSegment moved = step_euler(seg, Vec::Constant(1, 2.0), Mat::Zero(1, 1), 0.01, Vec::Constant(1, 0.7));
    CHECK(moved.endpoint()(0) == doctest::Approx(1.52).epsilon(1e-15));
    CHECK(moved(moved.size() - 2, 0) == 1.5);
    try {
      euler_update(Vec::Constant(1, 1.0), Vec::Constant(1, INFINITY), identity(1), 0.01, Vec::Zero(1), 17);
      FAIL("expected BlowUp");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::BlowUp);
      CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
  }

  TEST_CASE("step grid helpers") {
    CHECK(step_count(0.01, 1.0) == 100);
    CHECK_THROWS_AS(step_count(0.03, 1.0), Error);
    CHECK(save_steps(0.25, 2.0, {0.0, 0.5, 2.0}) == std::vector<std::size_t>{0, 2, 8});
    CHECK_THROWS_AS(save_steps(0.25, 2.0, {0.3}), Error);
    CHECK_THROWS_AS(save_steps(0.25, 2.0, {2.5}), Error);
  }

  TEST_CASE("brownian increments") {
    const NormalStream s(5, Stream::Brownian, 0, 0);
    const Vec a = brownian_increment(s, 3, 0.04, 2), b = brownian_increment(s, 3, 0.04, 2);
    CHECK(a == b);
    std::vector<double> z(2);
    s.fill(3, z);
    CHECK(a(0) == doctest::Approx(0.2 * z[0]).epsilon(1e-15));
    CHECK(a(1) == doctest::Approx(0.2 * z[1]).epsilon(1e-15));
  }

  TEST_CASE("Ornstein-Uhlenbeck moments") {
    const auto cfg = PathSpaceConfig::make(1, 1.0, 0.005, 1);
    const DirectDynamics dyn(linear(cfg, -1.0));
    const double x0 = 2.0, t = 1.0;
    const std::size_t n = 4000;
    PathRunOptions o;
    o.h = 0.005;
    o.T = t;
    o.seed = 11;
    std::vector<double> x(n), sq(n);
    for (std::size_t r = 0; r < n; ++r) {
      o.replica = static_cast<std::uint32_t>(r);
      x[r] = simulate_path(dyn, PathSegment::constant(cfg, Vec::Constant(1, x0)), nullptr, o).sim.endpoint()(0);
    }
    const Estimate m = mean_estimate(x);
    CHECK(std::abs(m.mean - x0 * std::exp(-t)) <= 3 * m.std_error);
    for (std::size_t r = 0; r < n; ++r) sq[r] = (x[r] - m.mean) * (x[r] - m.mean);
    const Estimate v = mean_estimate(sq);
    CHECK(std::abs(v.mean - 0.5 * (1 - std::exp(-2 * t))) <= 3 * v.std_error + 2 * o.h);
  }

  TEST_CASE("Brownian particle cloud covariance") {
    const auto cfg2 = PathSpaceConfig::make(2, 1.0, 0.02, 1);
    const DirectDynamics dyn(linear(cfg2, 0.0));
    const std::size_t n = 3000;
    const ParticleCloud init(std::vector<PathSegment>(n, PathSegment::zero(cfg2)));
    McKeanOptions o;
    o.h = 0.02;
    o.T = 1.0;
    o.seed = 3;
    o.save_times = {0.5, 1.0};
    const McKeanResult res = simulate_mckean(dyn, init, o);
    REQUIRE(res.clouds.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
      const double t = res.times[j];
      const auto a = endpoints(res.clouds[j], 0), b = endpoints(res.clouds[j], 1);
      std::vector<double> aa(n), bb(n), ab(n);
      for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const Estimate vaa = mean_estimate(aa), vbb = mean_estimate(bb), vab = mean_estimate(ab);
      CHECK(std::abs(vaa.mean - t) <= 3 * vaa.std_error);
      CHECK(std::abs(vbb.mean - t) <= 3 * vbb.std_error);
      CHECK(std::abs(vab.mean) <= 3 * vab.std_error);
    }
  }

  TEST_CASE("single particle without law dependence equals the path simulation") {
    const CoefficientSet c = builtin_coefficients("linear", kCfg, {{"k1", 0.0}});
    const DirectDynamics dyn(c);
    const PathSegment xi = random_segment(kCfg, Vec::Zero(1), 0.5, 1, 0, 0);
    McKeanOptions mo;
    mo.h = 0.01;
    mo.T = 1.0;
    mo.seed = 21;
    mo.replica = 4;
    mo.save_times = {0.25, 0.5, 1.0};
    std::vector<PathSegment> from_mckean;
    simulate_mckean(dyn, ParticleCloud({xi}), mo, [&](double, const ParticleCloud& cl) { from_mckean.push_back(cl[0]); });
    PathRunOptions po;
    po.h = mo.h;
    po.T = mo.T;
    po.seed = mo.seed;
    po.replica = mo.replica;
    po.save_times = mo.save_times;
    std::vector<PathSegment> from_path;
    simulate_path(dyn, xi, nullptr, po, [&](double, const PathState& s) { from_path.push_back(s.sim); });
    REQUIRE(from_path.size() == 3);
    REQUIRE(from_mckean.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(from_path[j].values() == from_mckean[j].values());
  }

  TEST_CASE("linear builtin mean follows the delay equation") {
    const double theta = 1.5, beta = 0.6, k1 = 0.5;
    const auto cfg = PathSpaceConfig::make(1, 1.0, 0.005, 2);
    const CoefficientSet c = builtin_coefficients("linear", cfg);
    const DirectDynamics dyn(c);
    auto history = [](double s) { return 1.0 + 0.5 * s; };
    const PathSegment xi = PathSegment::from_function(cfg, [&](double s) { return Vec::Constant(1, history(s)); });
    const std::size_t n = 2000;
    McKeanOptions o;
    o.h = 0.005;
    o.T = 2.0;
    o.seed = 8;
    o.save_times = {1.0, 2.0};
    const McKeanResult res = simulate_mckean(dyn, ParticleCloud(std::vector<PathSegment>(n, xi)), o);
    for (std::size_t j = 0; j < 2; ++j) {
      const Estimate m = mean_estimate(endpoints(res.clouds[j]));
      const double want = linear_mean_oracle(theta, beta, k1, 1.0, cfg.T_mem, history, res.times[j]);
      CAPTURE(res.times[j]);
      CAPTURE(want);
      CHECK(std::abs(m.mean - want) <= 3 * m.std_error + 2 * o.h * std::abs(want));
    }
  }

  TEST_CASE("particle systems do not depend on the worker count") {
    const DirectDynamics dyn(builtin_coefficients("linear", kCfg));
    const ParticleCloud init = InitialLaw::gaussian_bridge(PathSegment::zero(kCfg), 0.3).cloud(2, 0, 64);
    McKeanOptions o;
    o.h = 0.01;
    o.T = 0.5;
    o.seed = 4;
    o.save_times = {0.5};
    o.workers = 1;
    const auto a = simulate_mckean(dyn, init, o);
    o.workers = 3;
    const auto b = simulate_mckean(dyn, init, o);
    for (std::size_t i = 0; i < init.size(); ++i) CHECK(a.clouds[0][i].values() == b.clouds[0][i].values());

    LawShiftOptions lo;
    lo.h = 0.01;
    lo.T = 0.3;
    lo.particles = 16;
    lo.replicas = 8;
    lo.save_times = {0.3};
    const InitialLaw mu = InitialLaw::gaussian_bridge(PathSegment::zero(kCfg), 0.3);
    const InitialLaw nu = mu.shifted(PathSegment::constant(kCfg, Vec::Constant(1, 0.5)));
    lo.workers = 1;
    const auto la = simulate_law_shift(dyn, mu, nu, lo);
    lo.workers = 2;
    const auto lb = simulate_law_shift(dyn, mu, nu, lo);
    CHECK(la.samples[0].w2 == lb.samples[0].w2);
    CHECK(la.samples[0].entropy.mean == lb.samples[0].entropy.mean);
  }

  TEST_CASE("initial laws") {
    const PathSegment base = random_segment(kCfg, Vec::Zero(1), 1.0, 6, 0, 0);
    const InitialLaw pm = InitialLaw::point_mass(base);
    CHECK(pm.deterministic());
    CHECK(pm.sample(1, 2, 3).values() == base.values());
    const InitialLaw g = InitialLaw::gaussian_bridge(base, 0.4);
    const PathSegment by = PathSegment::constant(kCfg, Vec::Constant(1, 1.25));
    const PathSegment a = g.sample(9, 1, 7), b = g.shifted(by).sample(9, 1, 7);
    CHECK(weighted_norm(b - a - by) < 1e-12);
    CHECK(g.sample(9, 1, 7).values() == a.values());
    CHECK(g.sample(9, 1, 8).values() != a.values());
    CHECK(g.cloud(9, 1, 5).size() == 5);
  }

  TEST_CASE("identical starting segments stay coupled") {
    const DirectDynamics dyn(builtin_coefficients("linear", kCfg, {{"k1", 0.0}}));
    const PathSegment xi = random_segment(kCfg, Vec::Zero(1), 1.0, 2, 0, 0);
    CouplingOptions o;
    o.h = 0.01;
    o.T = 2.0;
    o.save_times = {0.5, 1.0, 2.0};
    o.record_gamma = true;
    const CouplingRun run = simulate_coupled_Q(dyn, xi, xi, o, 0);
    for (const auto& s : run.samples) {
      CHECK(s.z_norm == 0.0);
      CHECK(s.half_int_gamma_sq == 0.0);
    }
    for (const auto& g : run.gamma) CHECK(g.norm() == 0.0);
  }

  TEST_CASE("closed-form entropy for the pure correction") {
    // b = 0, sigma = I: Z(t) = e^{-kappa t} Z(0), so 1/2 \int |gamma|^2 = kappa/4 (1 - e^{-2 kappa t}) |Z(0)|^2.
    const auto cfg2 = PathSpaceConfig::make(2, 1.0, 0.001, 1);
    const DirectDynamics dyn(linear(cfg2, 0.0));
    Vec z0(2);
    z0 << 0.6, -0.8;
    const PathSegment xi = PathSegment::constant(cfg2, z0), eta = PathSegment::zero(cfg2);
    CouplingOptions o;
    o.kappa = 4.0;
    o.h = 0.001;
    o.T = 1.0;
    o.save_times = {0.1, 0.5, 1.0};
    const CouplingRun run = simulate_coupled_Q(dyn, xi, eta, o, 3);
    double prev = 0.0;
    for (const auto& s : run.samples) {
      const double want = o.kappa / 4 * (1 - std::exp(-2 * o.kappa * s.t)) * z0.squaredNorm();
      CHECK(s.half_int_gamma_sq == doctest::Approx(want).epsilon(2 * o.kappa * o.h));
      CHECK(std::abs((s.x_end - s.y_end).norm() - std::exp(-o.kappa * s.t)) <= 2 * o.kappa * o.h);
      CHECK(s.half_int_gamma_sq >= prev);
      prev = s.half_int_gamma_sq;
    }
  }

  TEST_CASE("kappa must exceed tau") {
    const DirectDynamics dyn(linear(kCfg, -1.0));
    CouplingOptions o;
    o.kappa = 0.9;
    o.T = 0.1;
    CHECK_THROWS_AS(simulate_coupled_Q(dyn, PathSegment::zero(kCfg), PathSegment::zero(kCfg), o, 0), Error);
    o.enforce_kappa = false;
    CHECK_NOTHROW(simulate_coupled_Q(dyn, PathSegment::zero(kCfg), PathSegment::zero(kCfg), o, 0));
  }

  TEST_CASE("zero kappa gives unit weights") {
    const DirectDynamics dyn(builtin_coefficients("linear", kCfg, {{"k1", 0.0}}));
    CouplingOptions o;
    o.kappa = 0.0;
    o.enforce_kappa = false;
    o.T = 1.0;
    o.save_times = {0.5, 1.0};
    const PathSegment xi = PathSegment::constant(kCfg, Vec::Constant(1, 1.0));
    for (std::uint32_t r = 0; r < 10; ++r) {
      const CouplingRun run = simulate_coupled_P(dyn, xi, PathSegment::zero(kCfg), o, r);
      for (const auto& s : run.samples) {
        CHECK(s.log_R == 0.0);
        CHECK(s.half_int_gamma_sq == 0.0);
      }
    }
  }

  TEST_CASE("larger kappa contracts faster") {
    const DirectDynamics dyn(builtin_coefficients("linear", kCfg, {{"k1", 0.0}}));
    const PathSegment xi = PathSegment::constant(kCfg, Vec::Constant(1, 1.0)), eta = PathSegment::zero(kCfg);
    auto mean_end = [&](double kappa) {
      CouplingOptions o;
      o.kappa = kappa;
      o.T = 2.0;
      o.save_times = {2.0};
      std::vector<double> v;
      for (std::uint32_t r = 0; r < 50; ++r) {
        const auto& s = simulate_coupled_Q(dyn, xi, eta, o, r).samples[0];
        v.push_back((s.x_end - s.y_end).norm());
      }
      return mean_estimate(v).mean;
    };
    CHECK(mean_end(10.0) < mean_end(1.1));
  }

  TEST_CASE("Girsanov weights: martingale and entropy identity") {
    // Reweighting under P against direct simulation under Q, for the linear builtin with a fixed law.
    const auto cfg = PathSpaceConfig::make(1, 1.0, 0.02, 1);
    const CoefficientSet c = builtin_coefficients("linear", cfg);
    const DirectDynamics dyn(c);
    const PathSegment xi = PathSegment::constant(cfg, Vec::Constant(1, 0.5)), eta = PathSegment::zero(cfg);
    const ParticleCloud law = ParticleCloud::point_mass(eta);
    CouplingOptions o;
    o.kappa = 2.0;
    o.h = 0.02;
    o.T = 1.0;
    o.seed = 77;
    o.save_times = {0.5, 1.0};
    const std::size_t n = 10000;
    std::vector<double> R(n), RlogR(n), half(n);
    for (std::size_t r = 0; r < n; ++r) {
      const CouplingRun p = simulate_coupled_P(dyn, xi, eta, o, static_cast<std::uint32_t>(r), &law);
      const CouplingRun q = simulate_coupled_Q(dyn, xi, eta, o, static_cast<std::uint32_t>(r + n), &law);
      CHECK_FALSE(p.degenerate_weight);
      const double lr = p.samples.back().log_R;
      R[r] = std::exp(lr);
      RlogR[r] = R[r] * lr;
      half[r] = q.samples.back().half_int_gamma_sq;
    }
    const Estimate eR = mean_estimate(R), eRl = mean_estimate(RlogR), eh = mean_estimate(half);
    CAPTURE(eR.mean);
    CHECK(std::abs(eR.mean - 1.0) <= 3 * eR.std_error);
    CAPTURE(eRl.mean);
    CAPTURE(eh.mean);
    CHECK(std::abs(eRl.mean - eh.mean) <= 3 * std::hypot(eRl.std_error, eh.std_error));
  }

  TEST_CASE("law shift") {
    const DirectDynamics lin(builtin_coefficients("linear", kCfg));
    const InitialLaw mu = InitialLaw::gaussian_bridge(PathSegment::zero(kCfg), 0.3);
    const InitialLaw nu = mu.shifted(PathSegment::constant(kCfg, Vec::Constant(1, 0.8)));
    LawShiftOptions o;
    o.h = 0.01;
    o.T = 1.0;
    o.particles = 32;
    o.replicas = 16;
    o.save_times = {0.0, 0.5, 1.0};

    SUBCASE("equal laws") {
      const LawShiftRun run = simulate_law_shift(lin, mu, mu, o);
      for (const auto& s : run.samples) {
        CHECK(s.w2 == 0.0);
        CHECK(s.max_bar_zeta == 0.0);
        CHECK(s.int_bar_zeta_sq.mean == 0.0);
      }
    }
    SUBCASE("no law dependence") {
      const DirectDynamics flat(builtin_coefficients("linear", kCfg, {{"k1", 0.0}}));
      const LawShiftRun run = simulate_law_shift(flat, mu, nu, o);
      for (const auto& s : run.samples) {
        CHECK(s.w2 > 0.0);
        CHECK(s.max_bar_zeta == 0.0);
        CHECK(s.int_bar_zeta_sq.mean == 0.0);
      }
    }
    SUBCASE("bar zeta is bounded by the measured Wasserstein distance") {
      const LawShiftRun run = simulate_law_shift(lin, mu, nu, o);
      for (const auto& s : run.samples) {
        CHECK(s.max_bar_zeta > 0.0);
        CHECK(s.bar_zeta_ratio <= 1.0 + 1e-9);
        CHECK(s.entropy.mean >= 0.0);
      }
      CHECK(run.sigma_inverse_bound == doctest::Approx(1.0));
      CHECK(run.samples.back().int_bar_zeta_sq.mean > 0.0);
    }
  }

  TEST_CASE("exponential moments of A") {
    const DirectDynamics dyn(builtin_coefficients("linear", kCfg, {{"k1", 0.0}}));
    CouplingOptions o;
    o.T = 1.0;
    o.save_times = {0.0, 0.5, 1.0};
    o.alpha = 0.0;
    o.A_coefficient = 0.7;
    std::vector<CouplingRun> runs;
    const PathSegment xi = PathSegment::constant(kCfg, Vec::Constant(1, 1.0));
    for (std::uint32_t r = 0; r < 20; ++r) runs.push_back(simulate_coupled_Q(dyn, xi, PathSegment::zero(kCfg), o, r));
    const ExpMoment m = exp_moment_A(runs, 1.3);
    for (std::size_t j = 0; j < m.times.size(); ++j) {
      CHECK(m.value[j].mean == doctest::Approx(std::exp(1.3 * 0.7 * m.times[j])).epsilon(1e-12));
      CHECK(m.value[j].std_error == doctest::Approx(0.0));
    }
    CHECK_FALSE(m.unreliable);
    const ExpMoment one = exp_moment_A(runs, 0.0);
    for (const auto& v : one.value) CHECK(v.mean == 1.0);

    o.alpha = 0.5;
    o.A_coefficient = 1.0;
    double prev = 0.0;
    const CouplingRun r = simulate_coupled_Q(dyn, xi, PathSegment::zero(kCfg), o, 0);
    for (const auto& s : r.samples) {
      CHECK(s.A >= prev);
      prev = s.A;
    }
    CHECK(exp_moment_A(std::span<const CouplingRun>(&r, 1), 1.0).unreliable);
  }

  TEST_CASE("exponential moment of A at alpha = 1/2 is finite and grows linearly in log") {
    // A(t) = \int_0^t ||Y_s||^{1/2} ds grows like t once Y is stationary, so log E e^{beta A(t)} does too.
    const auto cfg = PathSpaceConfig::make(1, 1.0, 0.02, 2);
    const DirectDynamics dyn(builtin_coefficients("linear", cfg, {{"k1", 0.0}}));
    CouplingOptions o;
    o.h = 0.02;
    o.T = 8.0;
    o.alpha = 0.5;
    o.save_times = {2.0, 4.0, 8.0};
    std::vector<CouplingRun> runs;
    const PathSegment xi = PathSegment::constant(cfg, Vec::Constant(1, 0.5));
    for (std::uint32_t r = 0; r < 300; ++r) runs.push_back(simulate_coupled_Q(dyn, xi, PathSegment::zero(cfg), o, r));
    const ExpMoment m = exp_moment_A(runs, 0.2);
    CHECK_FALSE(m.unreliable);
    for (const auto& v : m.value) CHECK(std::isfinite(v.mean));
    const double l2 = std::log(m.value[0].mean), l4 = std::log(m.value[1].mean), l8 = std::log(m.value[2].mean);
    CHECK(l4 / l2 == doctest::Approx(2.0).epsilon(0.25));
    CHECK(l8 / l4 == doctest::Approx(2.0).epsilon(0.25));
  }
}
