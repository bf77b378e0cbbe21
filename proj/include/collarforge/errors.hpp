#pragma once

#include <stdexcept>
#include <string>

namespace collarforge {

// Failure taxonomy shared by every layer. `Input` covers malformed documents
// and bad arguments (CLI exit 2); the remaining kinds describe computations
// that cannot proceed on otherwise well-formed data.
enum class ErrorKind {
  Input,         // schema violation, unknown family, malformed flags
  Geometry,      // non-SPD metric sample, degenerate Jacobian
  Stencil,       // finite-difference stencil exceeds the grid
  Coverage,      // charts fail to cover a required point
  Escape,        // trajectory left the atlas
  Domain,        // argument outside an operation's domain
  Conditioning,  // ill-conditioned solve (Seeley order too high)
  Size,          // exact mode requested beyond its size limit
  Tolerance,     // iteration failed to reach the requested tolerance
  Unreachable,   // points in different connected components
  Range,         // scalar field violates a required range
  Precondition,  // documented precondition violated
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input: return "input";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Stencil: return "stencil";
    case ErrorKind::Coverage: return "coverage";
    case ErrorKind::Escape: return "escape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Conditioning: return "conditioning";
    case ErrorKind::Size: return "size";
    case ErrorKind::Tolerance: return "tolerance";
    case ErrorKind::Unreachable: return "unreachable";
    case ErrorKind::Range: return "range";
    case ErrorKind::Precondition: return "precondition";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace collarforge
