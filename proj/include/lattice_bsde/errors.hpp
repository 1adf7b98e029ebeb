#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lattice_bsde {

enum class ErrorCode {
  SingularBasis,
  NotPositiveDefinite,
  TreeTooLarge,
  NonEquivalent,
  DepthMismatch,
  BeliefNotInterior,
  EmptySet,
  NotConcave,
  OptimizerFailed,
  InconsistentExpectation,
  DriverEvaluationFailed,
  SlopeOutsideTheta,
  PreconditionUnverifiable,
  PenaltyDiverged,
  NoArgmax,
  NoRoot,
  UnreachablePoint,
  ConfigInvalid,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularBasis: return "SingularBasis";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::TreeTooLarge: return "TreeTooLarge";
    case ErrorCode::NonEquivalent: return "NonEquivalent";
    case ErrorCode::DepthMismatch: return "DepthMismatch";
    case ErrorCode::BeliefNotInterior: return "BeliefNotInterior";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NotConcave: return "NotConcave";
    case ErrorCode::OptimizerFailed: return "OptimizerFailed";
    case ErrorCode::InconsistentExpectation: return "InconsistentExpectation";
    case ErrorCode::DriverEvaluationFailed: return "DriverEvaluationFailed";
    case ErrorCode::SlopeOutsideTheta: return "SlopeOutsideTheta";
    case ErrorCode::PreconditionUnverifiable: return "PreconditionUnverifiable";
    case ErrorCode::PenaltyDiverged: return "PenaltyDiverged";
    case ErrorCode::NoArgmax: return "NoArgmax";
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::UnreachablePoint: return "UnreachablePoint";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace lattice_bsde
