#include "pathlab/dynamics.hpp"

#include "pathlab/error.hpp"

namespace pathlab {

DirectDynamics::DirectDynamics(CoefficientSet coeffs) : coeffs_(std::move(coeffs)) {}

Vec DirectDynamics::drift(const PathSegment& sim, const PathSegment&, const ParticleCloud* law) const {
  return coeffs_.b0(sim.endpoint()) + coeffs_.b1(sim, law);
}

Mat DirectDynamics::diffusion(const PathSegment& sim, const PathSegment&) const { return coeffs_.sigma(sim.endpoint()); }

TransformedDynamics::TransformedDynamics(CoefficientSet coeffs, std::shared_ptr<const ZvonkinMap> map)
    : coeffs_(std::move(coeffs)), map_(std::move(map)) {
  require(map_ != nullptr, ErrorKind::Precondition, "transformed dynamics need a Zvonkin map");
  require(map_->dim() == coeffs_.d, ErrorKind::Configuration, "map dimension does not match coefficients");
}

Vec TransformedDynamics::drift(const PathSegment&, const PathSegment& orig, const ParticleCloud* law) const {
  const Vec x = orig.endpoint();
  return map_->lambda() * map_->u(x) + map_->grad_theta(x) * coeffs_.b1(orig, law);
}

Mat TransformedDynamics::diffusion(const PathSegment&, const PathSegment& orig) const {
  const Vec x = orig.endpoint();
  return map_->grad_theta(x) * coeffs_.sigma(x);
}

PathSegment TransformedDynamics::to_simulated(const PathSegment& orig) const {
  std::vector<double> v = orig.values();
  const int d = orig.dim();
  Vec x(d);
  for (std::size_t i = 0; i < orig.size(); ++i) {
    for (int k = 0; k < d; ++k) x(k) = v[i * d + k];
    const Vec y = map_->theta_ext(x);
    for (int k = 0; k < d; ++k) v[i * d + k] = y(k);
  }
  return PathSegment(orig.config(), std::move(v));
}

std::unique_ptr<Dynamics> make_dynamics(const CoefficientSet& coeffs, std::shared_ptr<const ZvonkinMap> map) {
  if (coeffs.b0_vanishes) return std::make_unique<DirectDynamics>(coeffs);
  require(map != nullptr, ErrorKind::Configuration, "coefficients with a nonzero b0 need a Zvonkin map");
  return std::make_unique<TransformedDynamics>(coeffs, std::move(map));
}

PathState start_state(const Dynamics& dyn, const PathSegment& original) {
  require(original.dim() == dyn.dim(), ErrorKind::Configuration, "initial segment has the wrong dimension");
  if (!dyn.transformed()) return PathState{original, std::nullopt, 0};
  return PathState{dyn.to_simulated(original), original, 0};
}

void push_state(const Dynamics& dyn, PathState& state, const Vec& sim_value) {
  if (state.orig) {
    const Vec x = dyn.to_original(sim_value, state.orig->endpoint());
    if (dyn.outside(x)) ++state.exits;
    state.orig->push(x);
  }
  state.sim.push(sim_value);
}

}  // namespace pathlab
