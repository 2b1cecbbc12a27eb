#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace pathlab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless: every draw is a pure
// function of (key, counter), so streams can be addressed directly by (seed, replica, particle,
// step, component) and the results do not depend on scheduling.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

// Purpose tags keep independent uses of one seed on disjoint counter ranges.
enum class Stream : std::uint32_t {
  Brownian = 1,
  InitialLaw = 2,
  Validation = 3,
  Sampling = 4,
};

// Uniform in the open interval (0,1) from two 32-bit words (52 bits plus a half step).
inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

// Addressable standard-normal stream for one (seed, stream, replica, particle).
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, Stream stream, std::uint32_t replica, std::uint32_t particle = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        tag_(static_cast<std::uint32_t>(stream)),
        replica_(replica),
        particle_(particle) {}

  // Fills `out` with independent N(0,1) draws belonging to `step`; component k of the step is a
  // fixed function of (step, k).
  void fill(std::uint32_t step, std::span<double> out) const {
    for (std::size_t k = 0; k < out.size(); k += 2) {
      const auto block = static_cast<std::uint32_t>(k / 2);
      const auto r = Philox4x32::generate({step, particle_, replica_, (tag_ << 24) | block}, key_);
      const double u1 = to_unit_open(r[0], r[1]);
      const double u2 = to_unit_open(r[2], r[3]);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * M_PI * u2;
      out[k] = radius * std::cos(angle);
      if (k + 1 < out.size()) out[k + 1] = radius * std::sin(angle);
    }
  }

  double normal(std::uint32_t step) const {
    double z[1];
    fill(step, z);
    return z[0];
  }

  double uniform(std::uint32_t step) const {
    const auto r = Philox4x32::generate({step, particle_, replica_, (tag_ << 24) | 0xFFFFFFu}, key_);
    return to_unit_open(r[0], r[1]);
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t tag_;
  std::uint32_t replica_;
  std::uint32_t particle_;
};

}  // namespace pathlab
