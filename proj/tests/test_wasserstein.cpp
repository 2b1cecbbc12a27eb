#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pathlab/coefficients.hpp"
#include "pathlab/error.hpp"
#include "pathlab/rng.hpp"
#include "pathlab/wasserstein.hpp"

using namespace pathlab;

namespace {

const PathSpaceConfig kCfg = PathSpaceConfig::make(1, 1.0, 0.1, 3);

ParticleCloud random_cloud(std::size_t n, std::uint32_t salt, double shift = 0.0) {
  std::vector<PathSegment> parts;
  for (std::size_t i = 0; i < n; ++i)
    parts.push_back(random_segment(kCfg, Vec::Constant(1, shift), 1.0, 4242, salt, static_cast<std::uint32_t>(i)));
  return ParticleCloud(std::move(parts));
}

// min over permutations of the mean cost, to the power 1/k.
double brute_force(const ParticleCloud& A, const ParticleCloud& B, double k, double N) {
  const Eigen::MatrixXd C = truncated_cost_matrix(A, B, k, N);
  std::vector<int> perm(A.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += C(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / A.size(), 1.0 / k);
}

}  // namespace

TEST_SUITE("wasserstein") {
  TEST_CASE("identical clouds are at distance zero") {
    const ParticleCloud A = random_cloud(5, 1);
    CHECK(wk_truncated(A, A, 2.0, kCfg.T_mem).value == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(wk_full(A, A, 2.0).value == doctest::Approx(0.0).epsilon(1e-14));
  }

  TEST_CASE("single particles: the truncated seminorm of the difference") {
    const ParticleCloud A = random_cloud(1, 2), B = random_cloud(1, 3);
    for (double N : {0.1, 1.0, 3.0})
      CHECK(wk_truncated(A, B, 2.0, N).value == doctest::Approx(truncated_norm(A[0] - B[0], N)));
  }

  TEST_CASE("exact solver equals the permutation oracle on random uniform clouds") {
    for (std::uint32_t trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + trial % 8;
      const ParticleCloud A = random_cloud(n, 10 + trial), B = random_cloud(n, 500 + trial, 0.5);
      const double k = 1.0 + (trial % 3) * 0.5;
      const double N = kCfg.h * (1 + trial % kCfg.steps());
      CHECK(std::abs(wk_truncated(A, B, k, N).value - brute_force(A, B, k, N)) <= 1e-10);
    }
  }

  TEST_CASE("metric axioms on random triples") {
    for (std::uint32_t trial = 0; trial < 40; ++trial) {
      const std::size_t n = 2 + trial % 5;
      const ParticleCloud A = random_cloud(n, 1000 + trial), B = random_cloud(n, 2000 + trial, 0.3),
                          C = random_cloud(n, 3000 + trial, -0.4);
      for (double k : {1.0, 2.0}) {
        const double ab = wk_truncated(A, B, k, kCfg.T_mem).value, ba = wk_truncated(B, A, k, kCfg.T_mem).value;
        const double bc = wk_truncated(B, C, k, kCfg.T_mem).value, ac = wk_truncated(A, C, k, kCfg.T_mem).value;
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ac <= ab + bc + 1e-12);
      }
    }
  }

  TEST_CASE("general weights: exact transport matches the closed form for two points") {
    // Two source points with weights (0.3, 0.7) onto two targets with (0.6, 0.4).
    Eigen::MatrixXd C(2, 2);
    C << 0.0, 1.0, 2.0, 0.5;
    const std::vector<double> a{0.3, 0.7}, b{0.6, 0.4};
    // Feasible plans: pi_00 = x in [0, 0.3]; cost = 0*x + 1*(0.3-x) + 2*(0.6-x) + 0.5*(0.4 - (0.3 - x))
    // = 1.55 - 2.5 x, minimized at x = 0.3.
    const OTPlan plan = solve_transport_exact(C, a, b);
    CHECK(plan.objective == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(plan.plan.rowwise().sum()(0) == doctest::Approx(0.3));
    CHECK(plan.plan.colwise().sum()(1) == doctest::Approx(0.4));
    CHECK_THROWS_AS(solve_transport_exact(C, std::vector<double>{0.3, 0.6}, b), Error);
  }

  TEST_CASE("entropic estimate upper-bounds the exact value and tightens as eps shrinks") {
    const ParticleCloud A = random_cloud(7, 77), B = random_cloud(7, 78, 0.2);
    const Eigen::MatrixXd C = truncated_cost_matrix(A, B, 2.0, kCfg.T_mem);
    const std::vector<double> w(7, 1.0 / 7);
    const double exact = solve_transport_exact(C, w, w).objective;
    double previous = INFINITY;
    for (double eps : {1.0, 0.1, 0.01, 0.001}) {
      const OTPlan p = solve_transport_entropic(C, w, w, eps * C.maxCoeff());
      CHECK(p.objective >= exact - 1e-12);
      CHECK(p.objective <= previous + 1e-12);
      CHECK(p.duality_gap >= -1e-12);
      previous = p.objective;
    }
    CHECK(previous == doctest::Approx(exact).epsilon(1e-3));
  }

  TEST_CASE("wk_full is the max over levels") {
    // Segments differing only at the endpoint: every level sees the same cost.
    const PathSegment z = PathSegment::zero(kCfg);
    PathSegment e = z;
    e.push(Vec::Constant(1, 2.0));
    PathSegment zz = z;
    zz.push(Vec::Constant(1, 0.0));
    const ParticleCloud A({zz}), B({e});
    for (const auto& r : wk_level_profile(A, B, 2.0)) CHECK(r.value == doctest::Approx(2.0));
    CHECK(wk_full(A, B, 2.0).value == doctest::Approx(2.0));

    // Segments differing only at s = -T_mem: only the top level sees them.
    std::vector<double> v(kCfg.size(), 0.0);
    v[0] = 1.0;
    const ParticleCloud C({PathSegment(kCfg, v)}), D({z});
    const auto profile = wk_level_profile(C, D, 2.0);
    for (std::size_t j = 0; j + 1 < profile.size(); ++j) CHECK(profile[j].value == 0.0);
    CHECK(wk_full(C, D, 2.0).value == doctest::Approx(std::exp(-kCfg.tau * kCfg.T_mem)));

    // Random clouds: the full value dominates every level and is attained.
    const ParticleCloud X = random_cloud(5, 901), Y = random_cloud(5, 902, 0.7);
    const auto lv = wk_level_profile(X, Y, 2.0);
    const double full = wk_full(X, Y, 2.0).value;
    double best = 0.0;
    for (const auto& r : lv) {
      CHECK(full >= r.value - 1e-12);
      best = std::max(best, r.value);
    }
    CHECK(full == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("cloud moments") {
    CHECK(cloud_moment(ParticleCloud::point_mass(PathSegment::zero(kCfg)), 2.0) == 0.0);
    const ParticleCloud two({PathSegment::constant(kCfg, Vec::Constant(1, 1.0)),
                             PathSegment::constant(kCfg, Vec::Constant(1, 3.0))});
    CHECK(cloud_moment(two, 2.0) == doctest::Approx(std::sqrt(5.0)));
    // Power means increase with k.
    const ParticleCloud A = random_cloud(9, 31);
    double previous = 0.0;
    for (double k : {1.0, 1.5, 2.0, 3.0, 4.0}) {
      const double m = cloud_moment(A, k);
      CHECK(m >= previous - 1e-12);
      previous = m;
    }
  }

  TEST_CASE("Hoelder ordering between W2 and W_{2+eps}") {
    for (std::uint32_t trial = 0; trial < 20; ++trial) {
      const ParticleCloud A = random_cloud(6, 4000 + trial), B = random_cloud(6, 5000 + trial, 0.5);
      CHECK(wk_truncated(A, B, 2.0, kCfg.T_mem).value <= wk_truncated(A, B, 3.0, kCfg.T_mem).value + 1e-12);
    }
  }

  TEST_CASE("large uniform clouds use assignment, non-uniform large ones the entropic solver") {
    const ParticleCloud A = random_cloud(80, 61), B = random_cloud(80, 62, 0.1);
    const WkResult r = wk_truncated(A, B, 2.0, kCfg.T_mem);
    CHECK(r.solver == OTSolver::Assignment);
    std::vector<double> w(80, 1.0 / 160);
    for (std::size_t i = 0; i < 40; ++i) w[i] = 3.0 / 160, w[79 - i] = 1.0 / 160;
    const ParticleCloud W(A.particles(), w);
    const WkResult e = wk_truncated(W, B, 2.0, kCfg.T_mem);
    CHECK(e.solver == OTSolver::Entropic);
    CHECK(e.regularization > 0.0);
  }
}
