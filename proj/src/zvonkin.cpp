#include "pathlab/zvonkin.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <ostream>

#include "pathlab/error.hpp"
#include "pathlab/parallel.hpp"

namespace pathlab {

EllipticGrid EllipticGrid::make(int dim, double L, double dx) {
  require(dim == 1 || dim == 2, ErrorKind::Configuration, "the resolvent solve supports d = 1 or 2");
  require(L > 0 && dx > 0 && std::isfinite(L) && std::isfinite(dx), ErrorKind::Configuration,
          "grid needs L > 0 and dx > 0");
  const double cells = L / dx;
  require(std::abs(cells - std::round(cells)) <= 1e-9 * std::max(1.0, cells) && std::round(cells) >= 2,
          ErrorKind::Configuration, "L/dx must be an integer >= 2");
  return EllipticGrid{dim, L, dx};
}

std::size_t EllipticGrid::points_per_axis() const { return 2 * static_cast<std::size_t>(std::llround(L / dx)) + 1; }

std::size_t EllipticGrid::total_points() const {
  const std::size_t n = points_per_axis();
  return dim == 1 ? n : n * n;
}

bool EllipticGrid::contains(const Vec& x) const {
  for (int k = 0; k < dim; ++k)
    if (!(std::abs(x(k)) <= L)) return false;
  return true;
}

ZvonkinMap::ZvonkinMap(EllipticGrid grid, double lambda, std::vector<double> u, double residual, double b0_sup)
    : grid_(grid), lambda_(lambda), u_(std::move(u)), residual_(residual), b0_sup_(b0_sup) {
  require(u_.size() == grid_.total_points() * static_cast<std::size_t>(grid_.dim), ErrorKind::Precondition,
          "u has the wrong number of values");
  finish();
}

ZvonkinMap ZvonkinMap::constant(const EllipticGrid& grid, double lambda, const Vec& c) {
  require(c.size() == grid.dim, ErrorKind::Precondition, "constant has the wrong dimension");
  std::vector<double> u(grid.total_points() * grid.dim);
  for (std::size_t p = 0; p < grid.total_points(); ++p)
    for (int k = 0; k < grid.dim; ++k) u[p * grid.dim + k] = c(k);
  return ZvonkinMap(grid, lambda, std::move(u), 0.0, lambda * c.norm());
}

void ZvonkinMap::finish() {
  const int d = grid_.dim;
  const std::size_t n = grid_.points_per_axis();
  const double dx = grid_.dx;
  grad_.assign(grid_.total_points() * d * d, 0.0);
  norms_ = {};
  auto node = [&](std::size_t i, std::size_t j) { return d == 1 ? i : i * n + j; };
  auto value = [&](std::size_t i, std::size_t j, int k) { return u_[node(i, j) * d + k]; };
  auto diff = [&](std::size_t i, std::size_t j, int k, int axis) {
    std::size_t idx = axis == 0 ? i : j;
    auto at = [&](std::size_t m) { return axis == 0 ? value(m, j, k) : value(i, m, k); };
    if (idx == 0) return (at(1) - at(0)) / dx;
    if (idx == n - 1) return (at(n - 1) - at(n - 2)) / dx;
    return (at(idx + 1) - at(idx - 1)) / (2 * dx);
  };
  auto second = [&](std::size_t i, std::size_t j, int k, int axis) {
    const std::size_t idx = axis == 0 ? i : j;
    if (idx == 0 || idx == n - 1) return 0.0;
    auto at = [&](std::size_t m) { return axis == 0 ? value(m, j, k) : value(i, m, k); };
    return (at(idx + 1) - 2 * at(idx) + at(idx - 1)) / (dx * dx);
  };
  const std::size_t ny = d == 1 ? 1 : n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const std::size_t p = node(i, j);
      Vec uv(d);
      Mat g(d, d);
      for (int k = 0; k < d; ++k) {
        uv(k) = value(i, j, k);
        for (int a = 0; a < d; ++a) {
          g(k, a) = diff(i, j, k, a);
          grad_[(p * d + k) * d + a] = g(k, a);
          norms_.hess_sup = std::max(norms_.hess_sup, std::abs(second(i, j, k, a)));
        }
      }
      norms_.u_sup = std::max(norms_.u_sup, uv.norm());
      norms_.grad_sup = std::max(norms_.grad_sup, operator_norm(g));
    }
  }
}

void ZvonkinMap::locate(const Vec& x, std::size_t idx[2], double frac[2]) const {
  const std::size_t n = grid_.points_per_axis();
  for (int k = 0; k < grid_.dim; ++k) {
    double pos = (x(k) + grid_.L) / grid_.dx;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    std::size_t i = static_cast<std::size_t>(pos);
    if (i > n - 2) i = n - 2;
    idx[k] = i;
    frac[k] = pos - static_cast<double>(i);
  }
}

template <class Fetch>
void ZvonkinMap::interpolate(const std::vector<double>& src, const Vec& x, int width, Fetch&& out) const {
  std::size_t idx[2] = {0, 0};
  double frac[2] = {0, 0};
  locate(x, idx, frac);
  if (grid_.dim == 1) {
    const double* a = &src[idx[0] * width];
    const double* b = &src[(idx[0] + 1) * width];
    for (int m = 0; m < width; ++m) out(m, (1 - frac[0]) * a[m] + frac[0] * b[m]);
    return;
  }
  const std::size_t n = grid_.points_per_axis();
  const double* p00 = &src[(idx[0] * n + idx[1]) * width];
  const double* p01 = &src[(idx[0] * n + idx[1] + 1) * width];
  const double* p10 = &src[((idx[0] + 1) * n + idx[1]) * width];
  const double* p11 = &src[((idx[0] + 1) * n + idx[1] + 1) * width];
  const double fx = frac[0], fy = frac[1];
  for (int m = 0; m < width; ++m)
    out(m, (1 - fx) * (1 - fy) * p00[m] + (1 - fx) * fy * p01[m] + fx * (1 - fy) * p10[m] + fx * fy * p11[m]);
}

Vec ZvonkinMap::u(const Vec& x) const {
  const int d = grid_.dim;
  require(x.size() == d, ErrorKind::Precondition, "point has the wrong dimension");
  Vec out(d);
  interpolate(u_, x, d, [&](int m, double v) { out(m) = v; });
  return out;
}

Mat ZvonkinMap::grad_u(const Vec& x) const {
  const int d = grid_.dim;
  require(x.size() == d, ErrorKind::Precondition, "point has the wrong dimension");
  Mat out(d, d);
  interpolate(grad_, x, d * d, [&](int m, double v) { out(m / d, m % d) = v; });
  return out;
}

Vec ZvonkinMap::theta(const Vec& x) const {
  require(grid_.contains(x), ErrorKind::OutOfDomain, "theta: point outside the grid box");
  return x + u(x);
}

Vec ZvonkinMap::theta_inv_ext(const Vec& y, const Vec& guess) const {
  Vec x = guess;
  for (int it = 0; it < 200; ++it) {
    const Vec next = y - u(x);
    const double step = (next - x).norm();
    x = next;
    if (step <= 1e-13 * (1.0 + y.norm())) return x;
  }
  fail(ErrorKind::SolverFailure, "theta inverse: Picard iteration did not converge");
}

Vec ZvonkinMap::theta_inv(const Vec& y) const {
  require(y.size() == grid_.dim, ErrorKind::Precondition, "point has the wrong dimension");
  require(grid_.contains(y), ErrorKind::OutOfDomain, "theta_inv: point outside the grid box");
  const Vec x = theta_inv_ext(y, y - u(y));
  require(grid_.contains(x), ErrorKind::OutOfDomain, "theta_inv: preimage leaves the grid box");
  return x;
}

double b0_sup_on_grid(const CoefficientSet& coeffs, const EllipticGrid& grid) {
  require(coeffs.d == grid.dim, ErrorKind::Configuration, "grid dimension does not match coefficients");
  const std::size_t n = grid.points_per_axis();
  double sup = 0;
  Vec x(grid.dim);
  for (std::size_t p = 0; p < grid.total_points(); ++p) {
    x(0) = grid.coord(grid.dim == 1 ? p : p / n);
    if (grid.dim == 2) x(1) = grid.coord(p % n);
    sup = std::max(sup, coeffs.b0(x).norm());
  }
  return sup;
}

namespace {

struct NodeCoefficients {
  std::vector<double> b;  // d per node
  std::vector<double> a;  // d*d per node
};

NodeCoefficients sample_coefficients(const CoefficientSet& coeffs, const EllipticGrid& grid) {
  const int d = grid.dim;
  const std::size_t n = grid.points_per_axis();
  NodeCoefficients nc;
  nc.b.resize(grid.total_points() * d);
  nc.a.resize(grid.total_points() * d * d);
  Vec x(d);
  for (std::size_t p = 0; p < grid.total_points(); ++p) {
    x(0) = grid.coord(d == 1 ? p : p / n);
    if (d == 2) x(1) = grid.coord(p % n);
    const Vec b = coeffs.b0(x);
    const Mat s = coeffs.sigma(x);
    require(b.allFinite() && s.allFinite(), ErrorKind::InvalidCoefficient, "non-finite coefficient on the grid");
    const Mat a = s * s.transpose();
    for (int k = 0; k < d; ++k) nc.b[p * d + k] = b(k);
    for (int k = 0; k < d * d; ++k) nc.a[p * d * d + k] = a(k / d, k % d);
  }
  return nc;
}

// Interior max-norm residual of the discrete operator applied to u.
double residual_1d(const NodeCoefficients& nc, const std::vector<double>& u, double dx, double lambda) {
  double worst = 0;
  for (std::size_t i = 1; i + 1 < u.size(); ++i) {
    const double b = nc.b[i], a = nc.a[i];
    const double r = b * (u[i + 1] - u[i - 1]) / (2 * dx) + 0.5 * a * (u[i + 1] - 2 * u[i] + u[i - 1]) / (dx * dx) -
                     lambda * u[i] + b;
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

std::vector<double> solve_1d(const NodeCoefficients& nc, const EllipticGrid& grid, double lambda) {
  const std::size_t n = grid.points_per_axis();
  const double dx = grid.dx;
  std::vector<double> u(n);
  u[0] = nc.b[0] / lambda;
  u[n - 1] = nc.b[n - 1] / lambda;
  // Thomas algorithm on the interior unknowns 1..n-2.
  const std::size_t m = n - 2;
  std::vector<double> lower(m), diag(m), upper(m), rhs(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    const double b = nc.b[i], a = nc.a[i];
    lower[k] = 0.5 * a / (dx * dx) - b / (2 * dx);
    upper[k] = 0.5 * a / (dx * dx) + b / (2 * dx);
    diag[k] = -a / (dx * dx) - lambda;
    rhs[k] = -b;
  }
  rhs[0] -= lower[0] * u[0];
  rhs[m - 1] -= upper[m - 1] * u[n - 1];
  for (std::size_t k = 1; k < m; ++k) {
    const double w = lower[k] / diag[k - 1];
    diag[k] -= w * upper[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  u[m] = rhs[m - 1] / diag[m - 1];
  for (std::size_t k = m - 1; k-- > 0;) u[k + 1] = (rhs[k] - upper[k] * u[k + 2]) / diag[k];
  return u;
}

struct Solve2D {
  std::vector<double> u;
  double residual = 0;
};

Solve2D solve_2d(const NodeCoefficients& nc, const EllipticGrid& grid, double lambda) {
  const std::size_t n = grid.points_per_axis();
  const double dx = grid.dx;
  const std::size_t m = n - 2;
  auto node = [&](std::size_t i, std::size_t j) { return i * n + j; };
  auto unknown = [&](std::size_t i, std::size_t j) { return static_cast<int>((i - 1) * m + (j - 1)); };
  auto boundary = [&](std::size_t i, std::size_t j) { return i == 0 || j == 0 || i == n - 1 || j == n - 1; };

  std::vector<double> u(n * n * 2, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (boundary(i, j))
        for (int k = 0; k < 2; ++k) u[node(i, j) * 2 + k] = nc.b[node(i, j) * 2 + k] / lambda;

  // Stencil weights at an interior node.
  struct Entry {
    int di, dj;
    double w;
  };
  auto stencil = [&](std::size_t p) {
    const double b0 = nc.b[p * 2], b1 = nc.b[p * 2 + 1];
    const double a00 = nc.a[p * 4], a01 = nc.a[p * 4 + 1], a11 = nc.a[p * 4 + 3];
    const double h2 = dx * dx;
    std::vector<Entry> e = {
        {0, 0, -a00 / h2 - a11 / h2 - lambda},
        {1, 0, 0.5 * a00 / h2 + b0 / (2 * dx)},
        {-1, 0, 0.5 * a00 / h2 - b0 / (2 * dx)},
        {0, 1, 0.5 * a11 / h2 + b1 / (2 * dx)},
        {0, -1, 0.5 * a11 / h2 - b1 / (2 * dx)},
        {1, 1, a01 / (4 * h2)},
        {-1, -1, a01 / (4 * h2)},
        {1, -1, -a01 / (4 * h2)},
        {-1, 1, -a01 / (4 * h2)},
    };
    return e;
  };

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(m * m * 9);
  Eigen::MatrixXd rhs(m * m, 2);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const std::size_t p = node(i, j);
      const int row = unknown(i, j);
      rhs(row, 0) = -nc.b[p * 2];
      rhs(row, 1) = -nc.b[p * 2 + 1];
      for (const auto& e : stencil(p)) {
        if (e.w == 0.0) continue;
        const std::size_t ii = i + e.di, jj = j + e.dj;
        if (boundary(ii, jj)) {
          rhs(row, 0) -= e.w * u[node(ii, jj) * 2];
          rhs(row, 1) -= e.w * u[node(ii, jj) * 2 + 1];
        } else {
          triplets.emplace_back(row, unknown(ii, jj), e.w);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> A(static_cast<int>(m * m), static_cast<int>(m * m));
  A.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  require(lu.info() == Eigen::Success, ErrorKind::SolverFailure, "sparse LU factorization failed");
  const Eigen::MatrixXd sol = lu.solve(rhs);
  require(lu.info() == Eigen::Success, ErrorKind::SolverFailure, "sparse LU solve failed");
  for (std::size_t i = 1; i + 1 < n; ++i)
    for (std::size_t j = 1; j + 1 < n; ++j)
      for (int k = 0; k < 2; ++k) u[node(i, j) * 2 + k] = sol(unknown(i, j), k);

  Solve2D out;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const std::size_t p = node(i, j);
      const auto st = stencil(p);
      for (int k = 0; k < 2; ++k) {
        double r = nc.b[p * 2 + k];
        for (const auto& e : st) r += e.w * u[node(i + e.di, j + e.dj) * 2 + k];
        out.residual = std::max(out.residual, std::abs(r));
      }
    }
  }
  out.u = std::move(u);
  return out;
}

}  // namespace

ZvonkinMap solve_resolvent(const CoefficientSet& coeffs, const EllipticGrid& grid, double lambda) {
  require(lambda > 0 && std::isfinite(lambda), ErrorKind::Precondition, "lambda must be positive");
  require(coeffs.d == grid.dim, ErrorKind::Configuration, "grid dimension does not match coefficients");
  const NodeCoefficients nc = sample_coefficients(coeffs, grid);
  double b0_sup = 0;
  for (std::size_t p = 0; p < grid.total_points(); ++p) {
    double s = 0;
    for (int k = 0; k < grid.dim; ++k) s += nc.b[p * grid.dim + k] * nc.b[p * grid.dim + k];
    b0_sup = std::max(b0_sup, std::sqrt(s));
  }
  std::vector<double> u;
  double residual = 0;
  if (grid.dim == 1) {
    u = solve_1d(nc, grid, lambda);
    residual = residual_1d(nc, u, grid.dx, lambda);
  } else {
    auto s = solve_2d(nc, grid, lambda);
    u = std::move(s.u);
    residual = s.residual;
  }
  const double tol = 1e-8 * (1.0 + b0_sup);
  require(residual <= tol, ErrorKind::SolverFailure,
          "resolvent residual " + std::to_string(residual) + " exceeds " + std::to_string(tol));
  return ZvonkinMap(grid, lambda, std::move(u), residual, b0_sup);
}

std::vector<double> default_lambda_grid(double b0_sup, std::size_t count) {
  if (b0_sup <= 0) return {1.0};
  std::vector<double> out(count);
  const double lo = 2.0 * b0_sup, hi = 1000.0 * b0_sup;
  for (std::size_t i = 0; i < count; ++i)
    out[i] = count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

SelectedMap select_lambda(const CoefficientSet& coeffs, const EllipticGrid& grid, const std::vector<double>& lambda_grid,
                          unsigned workers) {
  require(!lambda_grid.empty(), ErrorKind::Precondition, "lambda grid is empty");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    require(lambda_grid[i] > lambda_grid[i - 1], ErrorKind::Precondition, "lambda grid must be increasing");
  std::vector<std::unique_ptr<ZvonkinMap>> maps(lambda_grid.size());
  parallel_for(
      lambda_grid.size(),
      [&](std::size_t i) { maps[i] = std::make_unique<ZvonkinMap>(solve_resolvent(coeffs, grid, lambda_grid[i])); },
      workers == 0 ? default_workers() : workers);
  LambdaSweep sweep;
  std::size_t chosen = lambda_grid.size();
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    sweep.lambdas.push_back(lambda_grid[i]);
    sweep.u_sup.push_back(maps[i]->norms().u_sup);
    sweep.smallness.push_back(maps[i]->norms().smallness());
    sweep.residual.push_back(maps[i]->residual());
    // Slack for the rounding of an exact 1/2 (constant drifts at lambda = 2|b0|).
    if (chosen == lambda_grid.size() && maps[i]->norms().smallness() <= 0.5 + 1e-12) chosen = i;
  }
  if (chosen == lambda_grid.size()) {
    fail(ErrorKind::LambdaExhausted, "no lambda up to " + std::to_string(lambda_grid.back()) +
                                         " achieves ||u|| + ||grad u|| <= 1/2 (best " +
                                         std::to_string(*std::min_element(sweep.smallness.begin(), sweep.smallness.end())) +
                                         ")");
  }
  return SelectedMap{std::move(*maps[chosen]), std::move(sweep), chosen};
}

PathSegment theta_segment(const ZvonkinMap& map, const PathSegment& seg) {
  std::vector<double> v = seg.values();
  const int d = seg.dim();
  Vec x(d);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (int k = 0; k < d; ++k) x(k) = v[i * d + k];
    const Vec y = map.theta(x);
    for (int k = 0; k < d; ++k) v[i * d + k] = y(k);
  }
  return PathSegment(seg.config(), std::move(v));
}

PathSegment theta_inv_segment(const ZvonkinMap& map, const PathSegment& seg) {
  std::vector<double> v = seg.values();
  const int d = seg.dim();
  Vec y(d);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (int k = 0; k < d; ++k) y(k) = v[i * d + k];
    const Vec x = map.theta_inv(y);
    for (int k = 0; k < d; ++k) v[i * d + k] = x(k);
  }
  return PathSegment(seg.config(), std::move(v));
}

CoefficientSet transformed_coeffs(std::shared_ptr<const ZvonkinMap> map, const CoefficientSet& coeffs) {
  require(map != nullptr, ErrorKind::Precondition, "null Zvonkin map");
  require(map->dim() == coeffs.d, ErrorKind::Configuration, "map dimension does not match coefficients");
  CoefficientSet out = coeffs;
  out.name = coeffs.name + "_transformed";
  const int d = coeffs.d;
  out.b0 = [d](const Vec&) { return zeros(d); };
  out.b0_vanishes = true;
  out.b0_bound = 0.0;
  const Drift1 b1 = coeffs.b1;
  const Diffusion sigma = coeffs.sigma;
  out.b1 = [map, b1](const PathSegment& seg, const ParticleCloud* law) -> Vec {
    const PathSegment orig = theta_inv_segment(*map, seg);
    const Vec x = orig.endpoint();
    return map->lambda() * map->u(x) + map->grad_theta(x) * b1(orig, law);
  };
  out.sigma = [map, sigma](const Vec& y) -> Mat {
    const Vec x = map->theta_inv(y);
    return map->grad_theta(x) * sigma(x);
  };
  out.sigma_constant = false;
  out.center = map->theta_ext(coeffs.center);
  return out;
}

void write_csv(std::ostream& out, const ZvonkinMap& map) {
  const int d = map.dim();
  const auto& g = map.grid();
  const std::size_t n = g.points_per_axis();
  out << (d == 1 ? "x1" : "x1,x2");
  for (int k = 0; k < d; ++k) out << ",u" << k + 1;
  for (int k = 0; k < d; ++k)
    for (int a = 0; a < d; ++a) out << ",du" << k + 1 << a + 1;
  out << "\n";
  out.precision(17);
  for (std::size_t p = 0; p < g.total_points(); ++p) {
    out << g.coord(d == 1 ? p : p / n);
    if (d == 2) out << "," << g.coord(p % n);
    for (int k = 0; k < d; ++k) out << "," << map.u_values()[p * d + k];
    for (int m = 0; m < d * d; ++m) out << "," << map.grad_values()[p * d * d + m];
    out << "\n";
  }
}

std::string metadata_json(const ZvonkinMap& map, const LambdaSweep* sweep) {
  nlohmann::json j;
  j["dim"] = map.dim();
  j["L"] = map.grid().L;
  j["dx"] = map.grid().dx;
  j["lambda"] = map.lambda();
  j["u_sup"] = map.norms().u_sup;
  j["grad_u_sup"] = map.norms().grad_sup;
  j["hess_u_sup"] = map.norms().hess_sup;
  j["smallness"] = map.norms().smallness();
  j["residual"] = map.residual();
  j["b0_sup"] = map.b0_sup();
  if (sweep) {
    j["sweep"]["lambda"] = sweep->lambdas;
    j["sweep"]["u_sup"] = sweep->u_sup;
    j["sweep"]["smallness"] = sweep->smallness;
    j["sweep"]["residual"] = sweep->residual;
  }
  return j.dump(2);
}

}  // namespace pathlab
