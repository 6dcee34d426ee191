#pragma once

#include <stdexcept>
#include <string>

namespace dilatation {

enum class ErrorKind {
  Domain,
  Eval,
  NoConv,
  AlgebraMismatch,
  UnsupportedStep,
  Unbounded,
  Inadmissible,
  NotReached,
  ConfigInvalid,
  UnknownExperiment,
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "DOMAIN";
    case ErrorKind::Eval: return "EVAL";
    case ErrorKind::NoConv: return "NOCONV";
    case ErrorKind::AlgebraMismatch: return "ALGEBRA_MISMATCH";
    case ErrorKind::UnsupportedStep: return "UNSUPPORTED_STEP";
    case ErrorKind::Unbounded: return "UNBOUNDED";
    case ErrorKind::Inadmissible: return "INADMISSIBLE";
    case ErrorKind::NotReached: return "NOT_REACHED";
    case ErrorKind::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorKind::UnknownExperiment: return "UNKNOWN_EXPERIMENT";
    case ErrorKind::Io: return "IO";
  }
  return "UNKNOWN";
}

/// Exception carrying one of the library error kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dilatation
