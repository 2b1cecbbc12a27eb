#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "pathlab/coefficients.hpp"
#include "pathlab/linalg.hpp"

namespace pathlab {

// Uniform mesh on the box [-L, L]^dim; b0 and sigma are extended constantly outside.
struct EllipticGrid {
  int dim = 1;
  double L = 10.0;
  double dx = 1e-3;

  static EllipticGrid make(int dim, double L, double dx);
  std::size_t points_per_axis() const;
  std::size_t total_points() const;
  double coord(std::size_t i) const { return -L + static_cast<double>(i) * dx; }
  bool contains(const Vec& x) const;
};

struct ZvonkinNorms {
  double u_sup = 0.0;     // ||u||_inf
  double grad_sup = 0.0;  // ||grad u||_inf (operator norm)
  double hess_sup = 0.0;  // max second difference, diagnostic only
  double smallness() const { return u_sup + grad_sup; }
};

// Grid solution u of the resolvent equation with its finite-difference gradient, and the map
// Theta = id + u. Values between nodes are (bi)linear interpolations.
class ZvonkinMap {
 public:
  ZvonkinMap(EllipticGrid grid, double lambda, std::vector<double> u, double residual, double b0_sup);

  // u identically equal to c (test fixture and the closed-form constant case).
  static ZvonkinMap constant(const EllipticGrid& grid, double lambda, const Vec& c);

  const EllipticGrid& grid() const { return grid_; }
  int dim() const { return grid_.dim; }
  double lambda() const { return lambda_; }
  double residual() const { return residual_; }
  double b0_sup() const { return b0_sup_; }
  const ZvonkinNorms& norms() const { return norms_; }
  const std::vector<double>& u_values() const { return u_; }     // node-major, dim entries per node
  const std::vector<double>& grad_values() const { return grad_; }  // node-major, dim*dim per node (row = component)

  // Interpolated u and grad u; points outside the box use the nearest boundary value.
  Vec u(const Vec& x) const;
  Mat grad_u(const Vec& x) const;
  Mat grad_theta(const Vec& x) const { return identity(dim()) + grad_u(x); }

  // Throw OutOfDomain outside the box.
  Vec theta(const Vec& x) const;
  Vec theta_inv(const Vec& y) const;

  // Constant-extension versions used inside simulations. `guess` seeds the Picard iteration.
  Vec theta_ext(const Vec& x) const { return x + u(x); }
  Vec theta_inv_ext(const Vec& y, const Vec& guess) const;

 private:
  void locate(const Vec& x, std::size_t idx[2], double frac[2]) const;
  template <class Fetch>
  void interpolate(const std::vector<double>& src, const Vec& x, int width, Fetch&& out) const;
  void finish();

  EllipticGrid grid_;
  double lambda_;
  std::vector<double> u_;
  std::vector<double> grad_;
  double residual_;
  double b0_sup_;
  ZvonkinNorms norms_;
};

// Centered finite differences for (b0 . grad + 1/2 tr(a grad^2) - lambda) u = -b0 with Dirichlet data
// u = b0/lambda on the box boundary. Throws SolverFailure when the interior max-norm residual exceeds
// 1e-8 (1 + ||b0||_inf).
ZvonkinMap solve_resolvent(const CoefficientSet& coeffs, const EllipticGrid& grid, double lambda);

struct LambdaSweep {
  std::vector<double> lambdas;
  std::vector<double> u_sup;
  std::vector<double> smallness;  // ||u|| + ||grad u||
  std::vector<double> residual;
};

struct SelectedMap {
  ZvonkinMap map;
  LambdaSweep sweep;
  std::size_t selected = 0;
};

// Smallest lambda of the (increasing) grid with ||u|| + ||grad u|| <= 1/2; throws LambdaExhausted.
SelectedMap select_lambda(const CoefficientSet& coeffs, const EllipticGrid& grid, const std::vector<double>& lambda_grid,
                          unsigned workers = 0);

// Geometric grid from 2 ||b0|| to 1000 ||b0||.
std::vector<double> default_lambda_grid(double b0_sup, std::size_t count = 20);

// sup of |b0| over the grid nodes.
double b0_sup_on_grid(const CoefficientSet& coeffs, const EllipticGrid& grid);

// (b-hat, sigma-hat): the coefficients of Y = Theta(X). The result ignores b0 (it is absorbed) and
// evaluates b1 on the pulled-back segment, so each drift evaluation costs O(T_mem/h) inversions.
CoefficientSet transformed_coeffs(std::shared_ptr<const ZvonkinMap> map, const CoefficientSet& coeffs);

// Pointwise image of a segment under Theta (or its inverse).
PathSegment theta_segment(const ZvonkinMap& map, const PathSegment& seg);
PathSegment theta_inv_segment(const ZvonkinMap& map, const PathSegment& seg);

// CSV "x1[,x2],u1[,u2],du11[,du12,du21,du22]" and a JSON metadata object.
void write_csv(std::ostream& out, const ZvonkinMap& map);
std::string metadata_json(const ZvonkinMap& map, const LambdaSweep* sweep = nullptr);

}  // namespace pathlab
