#pragma once

#include <memory>
#include <optional>

#include "pathlab/coefficients.hpp"
#include "pathlab/zvonkin.hpp"

namespace pathlab {

// Coefficients seen by the integrator. A path is tracked in simulated coordinates (where the Euler
// step happens) and, for transformed dynamics, also in original coordinates so that b1 can be
// evaluated on the pulled-back segment without re-inverting the whole history.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual int dim() const = 0;
  virtual bool transformed() const = 0;
  virtual const CoefficientSet& coefficients() const = 0;

  virtual Vec drift(const PathSegment& sim, const PathSegment& orig, const ParticleCloud* law) const = 0;
  virtual Mat diffusion(const PathSegment& sim, const PathSegment& orig) const = 0;

  virtual PathSegment to_simulated(const PathSegment& orig) const = 0;
  virtual Vec to_original(const Vec& y, const Vec& guess) const = 0;
  // True when x lies outside the region where the transform was computed.
  virtual bool outside(const Vec& x) const = 0;
};

// Plain coefficients: drift b0(xi(0)) + b1(xi, law), diffusion sigma(xi(0)).
class DirectDynamics final : public Dynamics {
 public:
  explicit DirectDynamics(CoefficientSet coeffs);
  int dim() const override { return coeffs_.d; }
  bool transformed() const override { return false; }
  const CoefficientSet& coefficients() const override { return coeffs_; }
  Vec drift(const PathSegment& sim, const PathSegment& orig, const ParticleCloud* law) const override;
  Mat diffusion(const PathSegment& sim, const PathSegment& orig) const override;
  PathSegment to_simulated(const PathSegment& orig) const override { return orig; }
  Vec to_original(const Vec& y, const Vec&) const override { return y; }
  bool outside(const Vec&) const override { return false; }

 private:
  CoefficientSet coeffs_;
};

// Y = Theta(X): drift lambda u(x) + grad Theta(x) b1(X, law), diffusion (grad Theta sigma)(x) with
// x = Theta^{-1}(Y(0)). Outside the box u is extended constantly.
class TransformedDynamics final : public Dynamics {
 public:
  TransformedDynamics(CoefficientSet coeffs, std::shared_ptr<const ZvonkinMap> map);
  int dim() const override { return coeffs_.d; }
  bool transformed() const override { return true; }
  const CoefficientSet& coefficients() const override { return coeffs_; }
  const ZvonkinMap& map() const { return *map_; }
  Vec drift(const PathSegment& sim, const PathSegment& orig, const ParticleCloud* law) const override;
  Mat diffusion(const PathSegment& sim, const PathSegment& orig) const override;
  PathSegment to_simulated(const PathSegment& orig) const override;
  Vec to_original(const Vec& y, const Vec& guess) const override { return map_->theta_inv_ext(y, guess); }
  bool outside(const Vec& x) const override { return !map_->grid().contains(x); }

 private:
  CoefficientSet coeffs_;
  std::shared_ptr<const ZvonkinMap> map_;
};

// Builds the dynamics for a coefficient set: direct when b0 vanishes, otherwise transformed by `map`.
std::unique_ptr<Dynamics> make_dynamics(const CoefficientSet& coeffs, std::shared_ptr<const ZvonkinMap> map);

struct PathState {
  PathSegment sim;
  std::optional<PathSegment> orig;
  std::size_t exits = 0;  // steps spent outside the transform box

  const PathSegment& original() const { return orig ? *orig : sim; }
};

PathState start_state(const Dynamics& dyn, const PathSegment& original);
// Appends the new simulated endpoint (and its preimage).
void push_state(const Dynamics& dyn, PathState& state, const Vec& sim_value);

}  // namespace pathlab
