#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "pathlab/linalg.hpp"

namespace pathlab {

// Discretization of the weighted path space: state dimension, decay rate tau of the weight e^{tau s},
// grid step h and the memory horizon T_mem at which the infinite history is truncated.
struct PathSpaceConfig {
  int d = 1;
  double tau = 1.0;
  double h = 0.01;
  double T_mem = 10.0;

  // Validates the invariants (d >= 1, tau > 0, h > 0, T_mem/h integral and >= 1).
  static PathSpaceConfig make(int d, double tau, double h, double T_mem);

  std::size_t steps() const;  // T_mem / h
  std::size_t size() const { return steps() + 1; }
  // Rate of the exponential memory kernel tracked by every segment.
  double memory_rate() const { return 2.0 * tau; }
  // Bound factor e^{-tau T_mem} on the neglected tail of the weighted norm.
  double truncation_factor() const;
  // Index of a time on the grid; throws Precondition unless t is a multiple of h.
  std::size_t grid_index(double t, const char* what) const;

  bool operator==(const PathSpaceConfig&) const = default;
};

// Precomputed grid weights shared by all segments built from the same configuration.
struct SegmentKernel {
  explicit SegmentKernel(const PathSpaceConfig& cfg);
  std::vector<double> times;        // s_i = -T_mem + i h
  std::vector<double> norm_weight;  // e^{tau s_i}
  std::vector<double> memory_exp;   // e^{rho s_i}, rho = memory_rate
  double memory_mass = 0.0;         // trapezoid sum of e^{rho s_i} h
  double memory_decay = 0.0;        // e^{-rho h}
};

// A discretized history window xi(s), s in [-T_mem, 0]: index i holds xi(-T_mem + i h), the last
// index holds xi(0). Stored as a ring buffer; push() shifts the window by one grid step in O(d).
// The weighted sup-norm and the exponential memory integral are maintained incrementally.
class PathSegment {
 public:
  // `values` is row-major, size() rows of d entries, in time order.
  PathSegment(const PathSpaceConfig& cfg, std::vector<double> values);

  static PathSegment zero(const PathSpaceConfig& cfg);
  static PathSegment constant(const PathSpaceConfig& cfg, const Vec& value);
  static PathSegment from_function(const PathSpaceConfig& cfg, const std::function<Vec(double)>& path);

  const PathSpaceConfig& config() const { return cfg_; }
  int dim() const { return cfg_.d; }
  std::size_t size() const { return n_; }
  double time(std::size_t i) const { return kernel_->times[i]; }

  double operator()(std::size_t i, int k) const { return buf_[physical(i) * cfg_.d + k]; }
  Vec value(std::size_t i) const;
  Vec endpoint() const { return value(n_ - 1); }
  double endpoint(int k) const { return (*this)(n_ - 1, k); }
  std::vector<double> values() const;  // row-major, time order

  // max_i e^{tau s_i} |xi(s_i)|, the grid version of the weighted norm.
  double weighted_norm() const;
  // Trapezoid value of \int_{-T_mem}^0 e^{rho s} xi_k(s) ds with rho = memory_rate().
  double memory_integral(int k) const;
  Vec memory_integral() const;
  double memory_mass() const { return kernel_->memory_mass; }

  // Drops the oldest sample and appends `value` as the new xi(0). Throws InvalidSegment on
  // non-finite input.
  void push(const Vec& value);
  void push(std::span<const double> value);

  PathSegment& operator+=(const PathSegment& other);
  PathSegment& operator-=(const PathSegment& other);
  PathSegment& operator*=(double c);

 private:
  struct NormEntry {
    std::uint64_t index;  // absolute sample index
    double magnitude;     // |xi| at that sample
  };

  std::size_t physical(std::size_t i) const {
    const std::size_t p = head_ + i;
    return p >= n_ ? p - n_ : p;
  }
  std::uint64_t newest_index() const { return pushes_ + n_ - 1; }
  void rebuild();
  void append_norm(std::uint64_t index, double magnitude);
  double norm_factor(std::uint64_t from, std::uint64_t to) const;  // e^{-tau h (to - from)}

  PathSpaceConfig cfg_;
  std::shared_ptr<const SegmentKernel> kernel_;
  std::size_t n_ = 0;
  std::size_t head_ = 0;
  std::uint64_t pushes_ = 0;
  std::vector<double> buf_;
  std::deque<NormEntry> norm_window_;  // monotone deque for the sliding weighted maximum
  std::vector<double> memory_sum_;     // Σ_i e^{rho s_i} xi_i (plain sum), per component
  std::size_t since_rebuild_ = 0;
};

PathSegment operator+(PathSegment a, const PathSegment& b);
PathSegment operator-(PathSegment a, const PathSegment& b);
PathSegment operator*(double c, PathSegment a);

// Free-function surface of the path-space operations.
double weighted_norm(const PathSegment& seg);
// max over s in [-N, 0] of e^{tau s}|xi(s)|; N must lie on the grid with 0 < N <= T_mem.
double truncated_norm(const PathSegment& seg, double N);
// All truncated norms at once: entry j is the norm on the last j+1 samples, i.e. N = j h
// (entry 0 is the endpoint alone).
std::vector<double> truncated_norm_profile(const PathSegment& seg);
PathSegment advance(PathSegment seg, const Vec& new_value);
// Flat extension xi^0(r) = xi(0) for all r <= 0.
PathSegment flat_extension(const PathSegment& seg);

// Checks e^{p tau t}||X_t||^p <= ||X_0||^p + max_{s in [0,t]} e^{p tau s}|X(s)|^p at every grid time
// of the future samples, allowing the truncation tolerance e^{-p tau T_mem} max|X|^p.
bool check_history_inequality(const PathSegment& seg0, std::span<const Vec> future_values, double p);

// CSV with header "s,x1,..,xd", rows from s = -T_mem to 0.
void write_csv(std::ostream& out, const PathSegment& seg);
PathSegment read_csv(std::istream& in, const PathSpaceConfig& cfg);

}  // namespace pathlab
