#include <doctest.h>

#include <cmath>
#include <vector>

#include "pathlab/rng.hpp"
#include "pathlab/stats.hpp"

using namespace pathlab;

TEST_SUITE("rng") {
  TEST_CASE("philox4x32-10 known-answer vectors") {
    CHECK(Philox4x32::generate({0, 0, 0, 0}, {0, 0}) ==
          Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
  }

  TEST_CASE("uniforms stay in the open unit interval") {
    CHECK(to_unit_open(0, 0) > 0.0);
    CHECK(to_unit_open(0xffffffffu, 0xffffffffu) < 1.0);
  }

  TEST_CASE("streams are addressable and reproducible") {
    const NormalStream a(7, Stream::Brownian, 3, 5), b(7, Stream::Brownian, 3, 5);
    std::vector<double> x(9), y(9);
    a.fill(11, x);
    b.fill(11, y);
    CHECK(x == y);
    // A prefix of a longer request equals the shorter request.
    std::vector<double> z(4);
    a.fill(11, z);
    for (int k = 0; k < 4; ++k) CHECK(z[k] == x[k]);
    // Different tags, replicas, particles and steps give different numbers.
    CHECK(NormalStream(7, Stream::InitialLaw, 3, 5).normal(11) != x[0]);
    CHECK(NormalStream(7, Stream::Brownian, 4, 5).normal(11) != x[0]);
    CHECK(NormalStream(7, Stream::Brownian, 3, 6).normal(11) != x[0]);
    CHECK(a.normal(12) != x[0]);
  }

  TEST_CASE("normal draws have unit variance") {
    const NormalStream s(123, Stream::Sampling, 0, 0);
    std::vector<double> z(200000);
    s.fill(0, z);
    std::vector<double> sq(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) sq[i] = z[i] * z[i];
    const Estimate m = mean_estimate(z), v = mean_estimate(sq);
    CHECK(std::abs(m.mean) < 4 * m.std_error);
    CHECK(std::abs(v.mean - 1.0) < 4 * v.std_error);
  }
}
