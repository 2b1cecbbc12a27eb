#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "pathlab/coefficients.hpp"
#include "pathlab/error.hpp"
#include "pathlab/rng.hpp"
#include "pathlab/zvonkin.hpp"

using namespace pathlab;

namespace {

const PathSpaceConfig kCfg = PathSpaceConfig::make(1, 1.0, 0.05, 3);

CoefficientSet constant_drift(const PathSpaceConfig& cfg, const Vec& c) {
  CoefficientSet out = builtin_coefficients("linear", cfg, {{"k1", 0.0}});
  out.b0 = [c](const Vec&) { return c; };
  out.b0_vanishes = false;
  out.b0_bound = c.norm();
  return out;
}

// Discrete operator b0 . grad u + 1/2 tr(a grad^2 u) - lambda u + b0 at interior nodes, evaluated
// here from the coefficient functions rather than from the solver's node tables.
double interior_residual(const CoefficientSet& c, const ZvonkinMap& m) {
  const auto& g = m.grid();
  const int d = g.dim;
  const std::size_t n = g.points_per_axis();
  const auto& u = m.u_values();
  const double dx = g.dx, lam = m.lambda();
  double worst = 0.0;
  if (d == 1) {
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const Vec x = Vec::Constant(1, g.coord(i));
      const double b = c.b0(x)(0);
      const double a = (c.sigma(x) * c.sigma(x).transpose())(0, 0);
      const double r = b * (u[i + 1] - u[i - 1]) / (2 * dx) + 0.5 * a * (u[i + 1] - 2 * u[i] + u[i - 1]) / (dx * dx) -
                       lam * u[i] + b;
      worst = std::max(worst, std::abs(r));
    }
    return worst;
  }
  auto at = [&](std::size_t i, std::size_t j, int k) { return u[(i * n + j) * 2 + k]; };
  for (std::size_t i = 1; i + 1 < n; ++i)
    for (std::size_t j = 1; j + 1 < n; ++j) {
      Vec x(2);
      x << g.coord(i), g.coord(j);
      const Vec b = c.b0(x);
      const Mat a = c.sigma(x) * c.sigma(x).transpose();
      for (int k = 0; k < 2; ++k) {
        const double ux = (at(i + 1, j, k) - at(i - 1, j, k)) / (2 * dx);
        const double uy = (at(i, j + 1, k) - at(i, j - 1, k)) / (2 * dx);
        const double uxx = (at(i + 1, j, k) - 2 * at(i, j, k) + at(i - 1, j, k)) / (dx * dx);
        const double uyy = (at(i, j + 1, k) - 2 * at(i, j, k) + at(i, j - 1, k)) / (dx * dx);
        const double uxy =
            (at(i + 1, j + 1, k) - at(i + 1, j - 1, k) - at(i - 1, j + 1, k) + at(i - 1, j - 1, k)) / (4 * dx * dx);
        const double r = b(0) * ux + b(1) * uy + 0.5 * (a(0, 0) * uxx + 2 * a(0, 1) * uxy + a(1, 1) * uyy) -
                         lam * at(i, j, k) + b(k);
        worst = std::max(worst, std::abs(r));
      }
    }
  return worst;
}

}  // namespace

TEST_SUITE("zvonkin") {
  TEST_CASE("grid construction") {
    const auto g = EllipticGrid::make(1, 10.0, 1e-3);
    CHECK(g.points_per_axis() == 20001);
    CHECK(g.coord(0) == -10.0);
    CHECK(g.coord(20000) == doctest::Approx(10.0));
    CHECK_THROWS_AS(EllipticGrid::make(3, 1.0, 0.1), Error);
    CHECK_THROWS_AS(EllipticGrid::make(1, 1.0, 0.3), Error);
    CHECK(EllipticGrid::make(2, 1.0, 0.25).total_points() == 81);
  }

  TEST_CASE("zero and constant drifts have closed-form solutions") {
    const auto g = EllipticGrid::make(1, 5.0, 0.01);
    const ZvonkinMap zero = solve_resolvent(builtin_coefficients("linear", kCfg), g, 3.0);
    CHECK(zero.norms().u_sup == 0.0);
    for (double c : {0.7, -1.3}) {
      for (double lam : {0.5, 4.0}) {
        const ZvonkinMap m = solve_resolvent(constant_drift(kCfg, Vec::Constant(1, c)), g, lam);
        for (double v : m.u_values()) CHECK(v == doctest::Approx(c / lam).epsilon(1e-10));
        CHECK(m.norms().grad_sup < 1e-9);
      }
    }
    const auto cfg2 = PathSpaceConfig::make(2, 1.0, 0.05, 3);
    Vec c2(2);
    c2 << 0.4, -0.9;
    const ZvonkinMap m2 = solve_resolvent(constant_drift(cfg2, c2), EllipticGrid::make(2, 1.0, 0.1), 2.0);
    for (std::size_t p = 0; p < m2.grid().total_points(); ++p) {
      CHECK(m2.u_values()[2 * p] == doctest::Approx(0.2).epsilon(1e-10));
      CHECK(m2.u_values()[2 * p + 1] == doctest::Approx(-0.45).epsilon(1e-10));
    }
  }

  TEST_CASE("builtin residuals and maximum principle") {
    const auto g = EllipticGrid::make(1, 10.0, 1e-3);
    for (const char* name : {"dini_sqrt", "dini_log"}) {
      CAPTURE(name);
      const CoefficientSet c = builtin_coefficients(name, kCfg);
      for (double lam : {1.0, 10.0, 100.0}) {
        CAPTURE(lam);
        const ZvonkinMap m = solve_resolvent(c, g, lam);
        const double b0 = b0_sup_on_grid(c, g);
        CHECK(m.residual() <= 1e-8 * (1 + b0));
        CHECK(interior_residual(c, m) <= 1e-8 * (1 + b0));
        CHECK(m.norms().u_sup <= b0 / lam + g.dx * g.dx);
      }
    }
    // The documented example: sqrt drift, a = 1, lambda = 10.
    const ZvonkinMap m = solve_resolvent(builtin_coefficients("dini_sqrt", kCfg), g, 10.0);
    CHECK(m.norms().u_sup <= 0.1 + 1e-6);
  }

  TEST_CASE("two-dimensional solve") {
    const auto cfg2 = PathSpaceConfig::make(2, 1.0, 0.1, 3);
    const auto g = EllipticGrid::make(2, 4.0, 0.05);
    for (const char* name : {"dini_sqrt", "dini_log"}) {
      CAPTURE(name);
      const CoefficientSet c = builtin_coefficients(name, cfg2);
      const ZvonkinMap m = solve_resolvent(c, g, 6.0);
      const double b0 = b0_sup_on_grid(c, g);
      CHECK(interior_residual(c, m) <= 1e-8 * (1 + b0));
      CHECK(m.norms().u_sup <= b0 / 6.0 + g.dx * g.dx);
    }
  }

  TEST_CASE("lambda selection") {
    const auto g = EllipticGrid::make(1, 5.0, 0.01);
    const std::vector<double> grid{0.5, 1.0, 1.9, 2.0, 2.1, 4.0};
    const SelectedMap s = select_lambda(constant_drift(kCfg, Vec::Constant(1, 1.0)), g, grid);
    CHECK(s.map.lambda() == 2.0);  // c/lambda <= 1/2 first holds at 2c
    CHECK(s.sweep.lambdas.size() == grid.size());
    const SelectedMap z = select_lambda(builtin_coefficients("linear", kCfg), g, grid);
    CHECK(z.selected == 0);
    CHECK_THROWS_AS(select_lambda(constant_drift(kCfg, Vec::Constant(1, 10.0)), g, grid), Error);
    CHECK_THROWS_AS(select_lambda(builtin_coefficients("linear", kCfg), g, {}), Error);
    CHECK(default_lambda_grid(1.0).front() == doctest::Approx(2.0));
    CHECK(default_lambda_grid(1.0).back() == doctest::Approx(1000.0));
    CHECK(default_lambda_grid(1.0).size() == 20);
  }

  TEST_CASE("sweep decays like the resolvent bound") {
    const auto g = EllipticGrid::make(1, 10.0, 1e-3);
    for (const char* name : {"dini_sqrt", "dini_log"}) {
      const CoefficientSet c = builtin_coefficients(name, kCfg);
      const double b0 = b0_sup_on_grid(c, g);
      const SelectedMap s = select_lambda(c, g, default_lambda_grid(b0));
      for (std::size_t i = 0; i < s.sweep.lambdas.size(); ++i) {
        CHECK(s.sweep.u_sup[i] <= b0 / s.sweep.lambdas[i] + g.dx * g.dx);
        if (i > 0) CHECK(s.sweep.u_sup[i] <= s.sweep.u_sup[i - 1] + g.dx * g.dx);
      }
      CHECK(s.map.norms().smallness() <= 0.5);
    }
  }

  TEST_CASE("selection is stable under mesh refinement") {
    for (const char* name : {"dini_sqrt", "dini_log"}) {
      CAPTURE(name);
      const CoefficientSet c = builtin_coefficients(name, kCfg);
      const auto coarse = EllipticGrid::make(1, 10.0, 1e-3), fine = EllipticGrid::make(1, 10.0, 5e-4);
      const auto lambdas = default_lambda_grid(b0_sup_on_grid(c, coarse));
      const SelectedMap a = select_lambda(c, coarse, lambdas), b = select_lambda(c, fine, lambdas);
      CHECK(a.map.lambda() == b.map.lambda());
      CHECK(b.map.norms().u_sup == doctest::Approx(a.map.norms().u_sup).epsilon(0.02));
      CHECK(b.map.norms().grad_sup == doctest::Approx(a.map.norms().grad_sup).epsilon(0.02));
    }
  }

  TEST_CASE("theta and its inverse") {
    const auto g = EllipticGrid::make(1, 5.0, 0.01);
    const ZvonkinMap shift = ZvonkinMap::constant(g, 1.0, Vec::Constant(1, 0.3));
    CHECK(shift.theta_inv(Vec::Constant(1, 1.0))(0) == doctest::Approx(0.7).epsilon(1e-12));
    const ZvonkinMap id = ZvonkinMap::constant(g, 1.0, Vec::Zero(1));
    CHECK(id.theta(Vec::Constant(1, -2.2))(0) == -2.2);
    CHECK_THROWS_AS(id.theta(Vec::Constant(1, 5.5)), Error);
    try {
      id.theta_inv(Vec::Constant(1, -7.0));
      FAIL("expected OutOfDomain");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::OutOfDomain);
    }
  }

  TEST_CASE("round trip on random points") {
    const auto g = EllipticGrid::make(1, 10.0, 1e-3);
    const CoefficientSet c = builtin_coefficients("dini_log", kCfg);
    const SelectedMap s = select_lambda(c, g, default_lambda_grid(b0_sup_on_grid(c, g)));
    const NormalStream stream(99, Stream::Sampling, 0);
    double worst = 0.0;
    for (std::uint32_t i = 0; i < 1000; ++i) {
      const Vec y = Vec::Constant(1, -9.0 + 18.0 * stream.uniform(i));
      worst = std::max(worst, (s.map.theta(s.map.theta_inv(y)) - y).norm());
    }
    CHECK(worst <= 1e-10);

    const auto cfg2 = PathSpaceConfig::make(2, 1.0, 0.1, 3);
    const CoefficientSet c2 = builtin_coefficients("dini_sqrt", cfg2);
    const auto g2 = EllipticGrid::make(2, 4.0, 0.05);
    const SelectedMap s2 = select_lambda(c2, g2, default_lambda_grid(b0_sup_on_grid(c2, g2)));
    worst = 0.0;
    for (std::uint32_t i = 0; i < 1000; ++i) {
      Vec y(2);
      y << -3.5 + 7.0 * stream.uniform(2 * i + 5000), -3.5 + 7.0 * stream.uniform(2 * i + 5001);
      worst = std::max(worst, (s2.map.theta(s2.map.theta_inv(y)) - y).norm());
    }
    CHECK(worst <= 1e-10);
  }

  TEST_CASE("identity and constant transforms") {
    const auto g = EllipticGrid::make(1, 60.0, 0.01);
    const CoefficientSet base = builtin_coefficients("dini_sqrt", kCfg);
    const CoefficientSet same = transformed_coeffs(std::make_shared<ZvonkinMap>(ZvonkinMap::constant(g, 2.0, Vec::Zero(1))), base);
    for (std::uint32_t i = 0; i < 20; ++i) {
      const PathSegment xi = random_segment(kCfg, Vec::Zero(1), 1.5, 8, i, 0);
      CHECK(same.b1(xi, nullptr)(0) == doctest::Approx(base.b1(xi, nullptr)(0)).epsilon(1e-14));
      CHECK(same.sigma(xi.endpoint())(0, 0) == doctest::Approx(base.sigma(xi.endpoint())(0, 0)));
    }

    // b1 = 0 and u = c/lambda: the transformed drift is the constant c.
    CoefficientSet flat = constant_drift(kCfg, Vec::Constant(1, 0.6));
    flat.b1 = [](const PathSegment&, const ParticleCloud*) { return Vec::Zero(1); };
    const auto m = std::make_shared<ZvonkinMap>(solve_resolvent(flat, g, 3.0));
    const CoefficientSet t = transformed_coeffs(m, flat);
    for (double x : {-2.0, 0.0, 1.7}) {
      const PathSegment seg = PathSegment::constant(kCfg, Vec::Constant(1, x));
      CHECK(t.b1(seg, nullptr)(0) == doctest::Approx(0.6).epsilon(1e-9));
      CHECK(t.sigma(Vec::Constant(1, x))(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(t.b0_vanishes);
  }

  TEST_CASE("transformed drift has the one-sided Lipschitz shape") {
    // |b(xi) - b(eta)| / (||xi - eta|| + ||eta||^alpha |xi(0) - eta(0)|) stays bounded as the pairs shrink.
    const auto g = EllipticGrid::make(1, 10.0, 1e-3);
    for (const char* name : {"dini_sqrt", "dini_log"}) {
      CAPTURE(name);
      const CoefficientSet c = builtin_coefficients(name, kCfg);
      const SelectedMap s = select_lambda(c, g, default_lambda_grid(b0_sup_on_grid(c, g)));
      const CoefficientSet t = transformed_coeffs(std::make_shared<ZvonkinMap>(s.map), c);
      const ParticleCloud law = ParticleCloud::point_mass(PathSegment::constant(kCfg, c.center));
      double worst_small = 0.0, worst_large = 0.0;
      for (std::uint32_t i = 0; i < 200; ++i) {
        const PathSegment xi = random_segment(kCfg, c.center, 0.1, 17, i, 0);
        const double eps = (i % 2) ? 1e-4 : 1e-1;
        const PathSegment dir = random_segment(kCfg, Vec::Zero(1), 0.1, 17, i, 1) - PathSegment::zero(kCfg);
        const PathSegment eta = xi + eps * dir;
        const double num = (t.b1(xi, &law) - t.b1(eta, &law)).norm();
        const double den = weighted_norm(xi - eta) +
                           std::pow(weighted_norm(eta), c.alpha) * (xi.endpoint() - eta.endpoint()).norm();
        (i % 2 ? worst_small : worst_large) = std::max(i % 2 ? worst_small : worst_large, num / den);
      }
      CHECK(std::isfinite(worst_small));
      CHECK(worst_small <= 2.0 * c.K + s.map.lambda());
      CHECK(worst_large <= 2.0 * c.K + s.map.lambda());
    }
  }

  TEST_CASE("export") {
    const auto g = EllipticGrid::make(1, 1.0, 0.25);
    const ZvonkinMap m = solve_resolvent(builtin_coefficients("dini_sqrt", kCfg), g, 5.0);
    std::ostringstream csv;
    write_csv(csv, m);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "x1,u1,du11");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 9);
    const auto j = nlohmann::json::parse(metadata_json(m));
    CHECK(j["lambda"].get<double>() == 5.0);
    CHECK(j["residual"].get<double>() == m.residual());
    CHECK_FALSE(j.contains("sweep"));
  }
}
