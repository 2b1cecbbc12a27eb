#include "pathlab/cloud.hpp"

#include <cmath>
#include <string>

#include "pathlab/error.hpp"

namespace pathlab {

ParticleCloud::ParticleCloud(std::vector<PathSegment> particles) : particles_(std::move(particles)) {
  require(!particles_.empty(), ErrorKind::InvalidCloud, "cloud needs at least one particle");
  weights_.assign(particles_.size(), 1.0 / static_cast<double>(particles_.size()));
  uniform_ = true;
  finish();
}

ParticleCloud::ParticleCloud(std::vector<PathSegment> particles, std::vector<double> weights)
    : particles_(std::move(particles)), weights_(std::move(weights)) {
  require(!particles_.empty(), ErrorKind::InvalidCloud, "cloud needs at least one particle");
  require(weights_.size() == particles_.size(), ErrorKind::InvalidCloud, "one weight per particle required");
  double total = 0;
  for (double w : weights_) {
    require(w >= 0 && std::isfinite(w), ErrorKind::InvalidCloud, "weights must be nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-12, ErrorKind::InvalidCloud,
          "weights must sum to 1 (got " + std::to_string(total) + ")");
  uniform_ = true;
  for (double w : weights_)
    if (w != weights_.front()) uniform_ = false;
  finish();
}

void ParticleCloud::finish() {
  const auto& cfg = particles_.front().config();
  mean_endpoint_ = Vec::Zero(cfg.d);
  for (std::size_t i = 0; i < particles_.size(); ++i) {
    require(particles_[i].config() == cfg, ErrorKind::InvalidCloud,
            "particle " + std::to_string(i) + " uses a different path-space configuration");
    mean_endpoint_ += weights_[i] * particles_[i].endpoint();
  }
}

}  // namespace pathlab
