#pragma once

#include <stdexcept>
#include <string>

namespace pathlab {

enum class ErrorKind {
  InvalidSegment,
  Precondition,
  Configuration,
  InvalidCoefficient,
  NotDini,
  SolverFailure,
  LambdaExhausted,
  OutOfDomain,
  BlowUp,
  SingularDiffusion,
  InvalidCloud,
};

const char* to_string(ErrorKind kind);

// Single exception type; callers dispatch on kind() (the CLI maps kinds to exit codes).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // True for failures of the numerics rather than of the inputs.
  bool numerical() const noexcept {
    return kind_ == ErrorKind::SolverFailure || kind_ == ErrorKind::BlowUp ||
           kind_ == ErrorKind::SingularDiffusion || kind_ == ErrorKind::LambdaExhausted;
  }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSegment: return "invalid segment";
    case ErrorKind::Precondition: return "precondition violated";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::InvalidCoefficient: return "invalid coefficient";
    case ErrorKind::NotDini: return "not a Dini modulus";
    case ErrorKind::SolverFailure: return "solver failure";
    case ErrorKind::LambdaExhausted: return "lambda exhausted";
    case ErrorKind::OutOfDomain: return "out of domain";
    case ErrorKind::BlowUp: return "blow-up";
    case ErrorKind::SingularDiffusion: return "singular diffusion";
    case ErrorKind::InvalidCloud: return "invalid cloud";
  }
  return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace pathlab
