#pragma once

#include <vector>

#include "pathlab/pathspace.hpp"

namespace pathlab {

// Weighted ensemble of segments: the empirical stand-in for a law on the path space.
class ParticleCloud {
 public:
  // Uniform weights.
  explicit ParticleCloud(std::vector<PathSegment> particles);
  // Weights must be nonnegative and sum to 1 within 1e-12.
  ParticleCloud(std::vector<PathSegment> particles, std::vector<double> weights);

  static ParticleCloud point_mass(const PathSegment& seg) { return ParticleCloud({seg}); }

  std::size_t size() const { return particles_.size(); }
  const PathSpaceConfig& config() const { return particles_.front().config(); }
  const std::vector<PathSegment>& particles() const { return particles_; }
  const PathSegment& operator[](std::size_t i) const { return particles_[i]; }
  const std::vector<double>& weights() const { return weights_; }
  bool uniform() const { return uniform_; }

  // Weighted mean of the endpoints xi(0).
  const Vec& mean_endpoint() const { return mean_endpoint_; }

  std::vector<PathSegment> take_particles() && { return std::move(particles_); }

 private:
  void finish();

  std::vector<PathSegment> particles_;
  std::vector<double> weights_;
  bool uniform_ = true;
  Vec mean_endpoint_;
};

}  // namespace pathlab
