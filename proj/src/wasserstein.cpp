#include "pathlab/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pathlab/error.hpp"

namespace pathlab {

const char* to_string(OTSolver solver) {
  switch (solver) {
    case OTSolver::Assignment: return "assignment";
    case OTSolver::MinCostFlow: return "min-cost-flow";
    case OTSolver::Entropic: return "entropic";
  }
  return "?";
}

double solve_assignment(const Eigen::MatrixXd& cost, std::vector<int>& row_to_col) {
  const int n = static_cast<int>(cost.rows());
  require(cost.cols() == n, ErrorKind::Precondition, "assignment needs a square cost matrix");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  // Sum the matched entries directly rather than trusting -v[0], which carries round-off.
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, row_to_col[i]);
  return total;
}

namespace {

void check_weights(std::span<const double> w, const char* which) {
  double total = 0;
  for (double x : w) {
    require(x >= 0 && std::isfinite(x), ErrorKind::InvalidCloud, std::string(which) + " weights must be nonnegative");
    total += x;
  }
  require(std::abs(total - 1.0) <= 1e-10, ErrorKind::InvalidCloud, std::string(which) + " weights must sum to 1");
}

}  // namespace

OTPlan solve_transport_exact(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  require(cost.rows() == n && cost.cols() == m, ErrorKind::Precondition, "cost matrix shape mismatch");
  check_weights(a, "source");
  check_weights(b, "target");
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr double eps = 1e-15;

  // Nodes 0..n-1 are sources, n..n+m-1 targets. Potentials keep reduced costs nonnegative.
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
  std::vector<double> supply(a.begin(), a.end()), demand(b.begin(), b.end());
  std::vector<double> pot(n + m, 0.0), dist(n + m);
  std::vector<int> prev(n + m);
  std::vector<char> done(n + m);

  auto remaining = [&] {
    double s = 0;
    for (double x : supply) s += x;
    return s;
  };

  int guard = 0;
  while (remaining() > 1e-14) {
    require(++guard <= 4 * (n + m) * (n + m) + 100, ErrorKind::SolverFailure, "transport: augmentation limit reached");
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < n; ++i)
      if (supply[i] > eps) dist[i] = 0.0;
    int sink = -1;
    for (;;) {
      int x = -1;
      for (int v = 0; v < n + m; ++v)
        if (!done[v] && dist[v] < inf && (x < 0 || dist[v] < dist[x])) x = v;
      if (x < 0) break;
      done[x] = 1;
      if (x >= n && demand[x - n] > eps) {
        sink = x;
        break;
      }
      if (x < n) {
        for (int j = 0; j < m; ++j) {
          const int y = n + j;
          if (done[y]) continue;
          const double rc = std::max(0.0, cost(x, j) + pot[x] - pot[y]);
          if (dist[x] + rc < dist[y]) {
            dist[y] = dist[x] + rc;
            prev[y] = x;
          }
        }
      } else {
        const int j = x - n;
        for (int i = 0; i < n; ++i) {
          if (done[i] || flow(i, j) <= eps) continue;
          const double rc = std::max(0.0, -cost(i, j) + pot[x] - pot[i]);
          if (dist[x] + rc < dist[i]) {
            dist[i] = dist[x] + rc;
            prev[i] = x;
          }
        }
      }
    }
    require(sink >= 0, ErrorKind::SolverFailure, "transport: no augmenting path");
    const double reach = dist[sink];
    for (int v = 0; v < n + m; ++v) pot[v] += std::min(dist[v], reach);

    // Bottleneck along the path.
    double delta = demand[sink - n];
    int v = sink;
    while (prev[v] >= 0) {
      const int u = prev[v];
      if (u >= n) delta = std::min(delta, flow(v, u - n));  // reverse edge target->source
      v = u;
    }
    delta = std::min(delta, supply[v]);
    const int source = v;
    v = sink;
    while (prev[v] >= 0) {
      const int u = prev[v];
      if (u < n) {
        flow(u, v - n) += delta;
      } else {
        flow(v, u - n) -= delta;
      }
      v = u;
    }
    supply[source] -= delta;
    demand[sink - n] -= delta;
  }

  OTPlan plan;
  plan.cost = cost;
  plan.plan = flow.cwiseMax(0.0);
  plan.objective = (plan.plan.array() * cost.array()).sum();
  plan.solver = OTSolver::MinCostFlow;
  return plan;
}

namespace {

double log_sum_exp(const double* v, int count, int stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) mx = std::max(mx, v[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0;
  for (int i = 0; i < count; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}

}  // namespace

OTPlan solve_transport_entropic(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b,
                                double eps, int max_iterations, double tolerance) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  require(cost.rows() == n && cost.cols() == m, ErrorKind::Precondition, "cost matrix shape mismatch");
  require(eps > 0, ErrorKind::Precondition, "entropic regularization must be positive");
  check_weights(a, "source");
  check_weights(b, "target");

  std::vector<double> f(n, 0.0), g(m, 0.0), la(n), lb(m);
  for (int i = 0; i < n; ++i) la[i] = a[i] > 0 ? std::log(a[i]) : -std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) lb[j] = b[j] > 0 ? std::log(b[j]) : -std::numeric_limits<double>::infinity();
  std::vector<double> scratch(std::max(n, m));
  Eigen::MatrixXd plan(n, m);

  auto build_plan = [&] {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
  };

  for (int it = 0; it < max_iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) scratch[j] = (g[j] - cost(i, j)) / eps;
      f[i] = a[i] > 0 ? eps * (la[i] - log_sum_exp(scratch.data(), m, 1)) : -1e300;
    }
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) scratch[i] = (f[i] - cost(i, j)) / eps;
      g[j] = b[j] > 0 ? eps * (lb[j] - log_sum_exp(scratch.data(), n, 1)) : -1e300;
    }
    if (it % 10 == 9 || it + 1 == max_iterations) {
      build_plan();
      double err = 0;
      for (int i = 0; i < n; ++i) err += std::abs(plan.row(i).sum() - a[i]);
      if (err < tolerance) break;
    }
  }
  build_plan();

  // Rounding onto the transport polytope (Altschuler, Weed & Rigollet 2017).
  for (int i = 0; i < n; ++i) {
    const double r = plan.row(i).sum();
    if (r > a[i]) plan.row(i) *= a[i] / r;
  }
  for (int j = 0; j < m; ++j) {
    const double c = plan.col(j).sum();
    if (c > b[j]) plan.col(j) *= b[j] / c;
  }
  Eigen::VectorXd er(n), ec(m);
  for (int i = 0; i < n; ++i) er(i) = a[i] - plan.row(i).sum();
  for (int j = 0; j < m; ++j) ec(j) = b[j] - plan.col(j).sum();
  const double mass = er.sum();
  if (mass > 0) plan += er * ec.transpose() / mass;

  // Dual bound from c-transforms of the Sinkhorn potentials (always feasible).
  std::vector<double> gc(m), fc(n);
  for (int j = 0; j < m; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) best = std::min(best, cost(i, j) - (a[i] > 0 ? f[i] : 0.0));
    gc[j] = best;
  }
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) best = std::min(best, cost(i, j) - gc[j]);
    fc[i] = best;
  }
  double dual = 0;
  for (int i = 0; i < n; ++i) dual += a[i] * fc[i];
  for (int j = 0; j < m; ++j) dual += b[j] * gc[j];

  OTPlan out;
  out.cost = cost;
  out.plan = plan;
  out.objective = (plan.array() * cost.array()).sum();
  out.solver = OTSolver::Entropic;
  out.regularization = eps;
  out.duality_gap = std::max(0.0, out.objective - dual);
  return out;
}

OTPlan solve_transport(const Eigen::MatrixXd& cost, std::span<const double> a, std::span<const double> b,
                       const OTOptions& opts) {
  const std::size_t n = a.size(), m = b.size();
  const bool uniform_square = n == m && std::all_of(a.begin(), a.end(), [&](double w) { return w == a[0]; }) &&
                              std::all_of(b.begin(), b.end(), [&](double w) { return w == b[0]; });
  if (uniform_square && n <= std::max(opts.assignment_cutoff, static_cast<std::size_t>(std::sqrt(opts.exact_cutoff)))) {
    check_weights(a, "source");
    check_weights(b, "target");
    std::vector<int> match;
    const double total = solve_assignment(cost, match);
    OTPlan plan;
    plan.cost = cost;
    plan.plan = Eigen::MatrixXd::Zero(n, m);
    for (std::size_t i = 0; i < n; ++i) plan.plan(i, match[i]) = a[i];
    plan.objective = total / static_cast<double>(n);
    plan.solver = OTSolver::Assignment;
    return plan;
  }
  if (n * m <= opts.exact_cutoff) return solve_transport_exact(cost, a, b);
  const double eps = opts.entropic_relative_eps * std::max(cost.maxCoeff(), 1e-300);
  return solve_transport_entropic(cost, a, b, eps, opts.entropic_max_iterations, opts.entropic_tolerance);
}

namespace {

void require_same_space(const ParticleCloud& A, const ParticleCloud& B) {
  require(A.config() == B.config(), ErrorKind::InvalidCloud, "clouds live on different path-space grids");
}

double power_root(double objective, double k) { return std::pow(std::max(objective, 0.0), 1.0 / std::max(1.0, k)); }

}  // namespace

Eigen::MatrixXd truncated_cost_matrix(const ParticleCloud& A, const ParticleCloud& B, double k, double N_trunc) {
  require_same_space(A, B);
  require(k >= 1, ErrorKind::Precondition, "only k >= 1 is supported");
  const auto& cfg = A.config();
  require(N_trunc > 0 && N_trunc <= cfg.T_mem * (1 + 1e-12), ErrorKind::Precondition,
          "truncation level must lie in (0, T_mem]");
  const std::size_t levels = cfg.grid_index(N_trunc, "truncation level");
  const std::size_t n = cfg.size();
  const int d = cfg.d;
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = std::exp(cfg.tau * A[0].time(i));
  Eigen::MatrixXd cost(A.size(), B.size());
  for (std::size_t a = 0; a < A.size(); ++a) {
    for (std::size_t b = 0; b < B.size(); ++b) {
      double best = 0;
      for (std::size_t i = n - 1 - levels; i < n; ++i) {
        double s = 0;
        for (int c = 0; c < d; ++c) {
          const double diff = A[a](i, c) - B[b](i, c);
          s += diff * diff;
        }
        best = std::max(best, weight[i] * std::sqrt(s));
      }
      cost(a, b) = std::pow(best, k);
    }
  }
  return cost;
}

WkResult wk_truncated(const ParticleCloud& A, const ParticleCloud& B, double k, double N_trunc, const OTOptions& opts) {
  const Eigen::MatrixXd cost = truncated_cost_matrix(A, B, k, N_trunc);
  const OTPlan plan = solve_transport(cost, A.weights(), B.weights(), opts);
  WkResult r;
  r.value = power_root(plan.objective, k);
  r.level = N_trunc;
  r.solver = plan.solver;
  r.duality_gap = plan.duality_gap;
  r.regularization = plan.regularization;
  r.levels_evaluated = 1;
  return r;
}

std::vector<WkResult> wk_level_profile(const ParticleCloud& A, const ParticleCloud& B, double k, const OTOptions& opts) {
  require_same_space(A, B);
  require(k >= 1, ErrorKind::Precondition, "only k >= 1 is supported");
  const auto& cfg = A.config();
  const std::size_t n = cfg.size();
  // Difference-norm profiles: one O(n) pass per pair covers all levels.
  std::vector<std::vector<double>> profile(A.size() * B.size());
  for (std::size_t a = 0; a < A.size(); ++a)
    for (std::size_t b = 0; b < B.size(); ++b) profile[a * B.size() + b] = truncated_norm_profile(A[a] - B[b]);
  std::vector<WkResult> out;
  out.reserve(n - 1);
  Eigen::MatrixXd cost(A.size(), B.size());
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t a = 0; a < A.size(); ++a)
      for (std::size_t b = 0; b < B.size(); ++b) cost(a, b) = std::pow(profile[a * B.size() + b][j], k);
    const OTPlan plan = solve_transport(cost, A.weights(), B.weights(), opts);
    WkResult r;
    r.value = power_root(plan.objective, k);
    r.level = static_cast<double>(j) * cfg.h;
    r.solver = plan.solver;
    r.duality_gap = plan.duality_gap;
    r.regularization = plan.regularization;
    r.levels_evaluated = 1;
    out.push_back(r);
  }
  return out;
}

WkResult wk_full(const ParticleCloud& A, const ParticleCloud& B, double k, const OTOptions& opts) {
  require_same_space(A, B);
  const auto& cfg = A.config();
  if (A.size() * B.size() <= opts.exact_cutoff && A.size() * B.size() * cfg.size() <= 4'000'000) {
    const auto levels = wk_level_profile(A, B, k, opts);
    WkResult best = levels.front();
    for (const auto& r : levels)
      if (r.value > best.value) best = r;
    best.levels_evaluated = levels.size();
    return best;
  }
  return wk_truncated(A, B, k, cfg.T_mem, opts);
}

double cloud_moment(const ParticleCloud& A, double k) {
  require(k > 0, ErrorKind::Precondition, "moment order must be positive");
  double s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.weights()[i] * std::pow(A[i].weighted_norm(), k);
  return std::pow(s, 1.0 / k);
}

}  // namespace pathlab
