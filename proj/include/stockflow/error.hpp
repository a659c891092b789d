#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stockflow {

enum class Errc {
  UnvalidatedModel,
  NonfiniteState,
  MissingLink,
  NegativeMean,
  BadBounds,
  OutOfRange,
  EmptyCatalog,
  UnnormalizedCatalog,
  RangeViolation,
  NegativeRevenue,
  MisalignedSeries,
  DegenerateInput,
  EmptySeries,
  ParseError,
  UnknownField,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnvalidatedModel: return "UNVALIDATED_MODEL";
    case Errc::NonfiniteState: return "NONFINITE_STATE";
    case Errc::MissingLink: return "MISSING_LINK";
    case Errc::NegativeMean: return "NEGATIVE_MEAN";
    case Errc::BadBounds: return "BAD_BOUNDS";
    case Errc::OutOfRange: return "OUT_OF_RANGE";
    case Errc::EmptyCatalog: return "EMPTY_CATALOG";
    case Errc::UnnormalizedCatalog: return "UNNORMALIZED_CATALOG";
    case Errc::RangeViolation: return "RANGE_VIOLATION";
    case Errc::NegativeRevenue: return "NEGATIVE_REVENUE";
    case Errc::MisalignedSeries: return "MISALIGNED_SERIES";
    case Errc::DegenerateInput: return "DEGENERATE_INPUT";
    case Errc::EmptySeries: return "EMPTY_SERIES";
    case Errc::ParseError: return "PARSE_ERROR";
    case Errc::UnknownField: return "UNKNOWN_FIELD";
  }
  return "UNKNOWN";
}

/// Base exception for every library failure. The code is the stable part;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace stockflow
