#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfgk {

enum class Errc {
  NotASimplex,
  NonSimplexInitial,
  NegativeRate,
  DegenerateHorizon,
  InvalidModel,
  OutOfRange,
  FamilyUnsupported,
  NonFiniteValue,
  MassLoss,
  NegativeMass,
  NotConverged,
  RateDependsOnMeasure,
  StateSpaceTooLarge,
  RateExceedsBound,
  InsufficientData,
  InvalidConfig,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NotASimplex: return "NotASimplex";
    case Errc::NonSimplexInitial: return "NonSimplexInitial";
    case Errc::NegativeRate: return "NegativeRate";
    case Errc::DegenerateHorizon: return "DegenerateHorizon";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::FamilyUnsupported: return "FamilyUnsupported";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::MassLoss: return "MassLoss";
    case Errc::NegativeMass: return "NegativeMass";
    case Errc::NotConverged: return "NotConverged";
    case Errc::RateDependsOnMeasure: return "RateDependsOnMeasure";
    case Errc::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case Errc::RateExceedsBound: return "RateExceedsBound";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Library exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mfgk
