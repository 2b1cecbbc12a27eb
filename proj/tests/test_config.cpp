#include <doctest.h>

#include <sstream>

#include "pathlab/config.hpp"
#include "pathlab/error.hpp"

using namespace pathlab;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::string message_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults match the desk-scale configuration") {
    const ExperimentConfig c = parse("");
    CHECK(c.d == 1);
    CHECK(c.tau == 1.0);
    CHECK(c.tau0 == 0.5);
    CHECK(c.T_mem == 10.0);
    CHECK(c.h == 0.01);
    CHECK(c.T == 8.0);
    CHECK(c.N_particles == 256);
    CHECK(c.N_replicas == 4096);
    CHECK(c.kappa == 4.0);
    CHECK(c.epsilon(0.0) == 0.0);
    CHECK(c.epsilon(0.5) == 1.0);
  }

  TEST_CASE("keys, comments and whitespace") {
    const ExperimentConfig c = parse(
        "# header\n"
        "coefficients.name = dini_log   # trailing comment\n"
        "coefficients.theta=2\n"
        "\n"
        "  sim.kappa=6\n"
        "sim.epsilon_alpha=0.25\n"
        "sim.seed=7\n"
        "testfn.profile=memory\n"
        "output.dir=/tmp/x\n");
    CHECK(c.coefficients == "dini_log");
    CHECK(c.coefficient_params.at("theta") == 2.0);
    CHECK(c.kappa == 6.0);
    CHECK(c.epsilon(0.0) == 0.25);
    CHECK(c.seed == 7);
    CHECK(c.testfn_profile == "memory");
    CHECK(c.output_dir == "/tmp/x");
    CHECK(c.build_coefficients().name == "dini_log");
  }

  TEST_CASE("errors name the file and line") {
    CHECK(message_of("sim.h=0.01\nsim.bogus=1\n").find("test.cfg:2") != std::string::npos);
    CHECK(message_of("sim.h=0.01\nsim.bogus=1\n").find("sim.bogus") != std::string::npos);
    CHECK(message_of("no equals sign\n").find("test.cfg:1") != std::string::npos);
    CHECK(message_of("sim.h=abc\n").find("sim.h") != std::string::npos);
    CHECK(message_of("sim.N_replicas=-3\n").find("sim.N_replicas") != std::string::npos);
  }

  TEST_CASE("invariants") {
    CHECK_FALSE(message_of("sim.tau0=1\n").empty());
    CHECK_FALSE(message_of("sim.tau0=0\n").empty());
    CHECK_FALSE(message_of("sim.delta=1\n").empty());
    CHECK_FALSE(message_of("sim.delta=0\n").empty());
    CHECK_FALSE(message_of("sim.T=20\n").empty());
    CHECK_FALSE(message_of("sim.h=0.03\n").empty());
    CHECK_FALSE(message_of("testfn.profile=cubic\n").empty());
    CHECK_FALSE(message_of("coefficients.D=1\n").empty());
    CHECK(message_of("sim.tau0=0.99\nsim.delta=0.1\n").empty());

    ExperimentConfig c = parse("sim.kappa=1\n");
    CHECK_THROWS_AS(c.require_kappa(), Error);
    c.kappa = 1.01;
    CHECK_NOTHROW(c.require_kappa());
  }

  TEST_CASE("coefficient construction") {
    CHECK_THROWS_AS(parse("coefficients.name=cubic\n").build_coefficients(), Error);
    CHECK_THROWS_AS(parse("coefficients.radius=1\n").build_coefficients(), Error);
    const CoefficientSet custom = parse(
                                      "coefficients.name=custom\npath.d=2\n"
                                      "coefficients.D=-2,0;0,-1\ncoefficients.L=0.5,0;0,0.5\n")
                                      .build_coefficients();
    CHECK(custom.d == 2);
    CHECK(custom.K1 == doctest::Approx(0.5));
    CHECK(custom.sigma(Vec::Zero(2)) == identity(2));
    CHECK_THROWS_AS(parse("coefficients.name=custom\ncoefficients.D=1,2\n").build_coefficients(), Error);
  }

  TEST_CASE("matrices") {
    const Mat m = parse_matrix("1, 2; 3,4");
    CHECK(m.rows() == 2);
    CHECK(m(1, 0) == 3.0);
    CHECK_THROWS_AS(parse_matrix("1,2;3"), Error);
    CHECK_THROWS_AS(parse_matrix("1,x"), Error);
  }

  TEST_CASE("text round trip") {
    const ExperimentConfig a = parse(
        "coefficients.name=linear\ncoefficients.k1=0.25\nsim.h=0.02\nsim.T=4\nsim.N_replicas=100\n"
        "sim.epsilon_alpha=0.5\ntestfn.amplitude=0.3\nzvonkin.dx=0.01\n");
    const ExperimentConfig b = parse(a.to_text());
    CHECK(b.to_text() == a.to_text());
    CHECK(b.coefficient_params == a.coefficient_params);
    CHECK(b.h == a.h);
    CHECK(b.epsilon_alpha == a.epsilon_alpha);
    CHECK(b.testfn_amplitude == a.testfn_amplitude);
  }

  TEST_CASE("missing files") {
    try {
      load_config("/nonexistent/dir/x.cfg");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("/nonexistent/dir/x.cfg") != std::string::npos);
    }
  }
}
