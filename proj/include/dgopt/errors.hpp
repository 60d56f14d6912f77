#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgopt {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ParseErrorKind {
  kMalformedRow,
  kMissingHeader,
  kDuplicateBus,
  kUnknownBus,
  kMissingSlack,
  kInvalidValue,
};

inline const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kMalformedRow: return "malformed row";
    case ParseErrorKind::kMissingHeader: return "missing or wrong header";
    case ParseErrorKind::kDuplicateBus: return "duplicate bus id";
    case ParseErrorKind::kUnknownBus: return "branch references unknown bus";
    case ParseErrorKind::kMissingSlack: return "missing slack bus";
    case ParseErrorKind::kInvalidValue: return "invalid value";
  }
  return "parse error";
}

// Raised by the CSV readers. `line` is 1-based and counts the header; 0 means
// the error is not tied to a single line.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::string table, std::size_t line,
             const std::string& detail)
      : Error(table + (line > 0 ? ":" + std::to_string(line) : std::string()) +
              ": " + to_string(kind) + (detail.empty() ? "" : ": " + detail)),
        kind_(kind),
        table_(std::move(table)),
        line_(line) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  const std::string& table() const noexcept { return table_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ParseErrorKind kind_;
  std::string table_;
  std::size_t line_;
};

class InvalidStateError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class SingularBranchError : public Error {
 public:
  using Error::Error;
};

// Backward/forward sweep did not settle within the iteration cap.
class DivergedError : public Error {
 public:
  DivergedError(int iterations, double last_change)
      : Error("power flow did not converge after " + std::to_string(iterations) +
              " iterations (last max voltage change " + std::to_string(last_change) +
              " pu)"),
        iterations_(iterations),
        last_change_(last_change) {}

  int iterations() const noexcept { return iterations_; }
  double last_change() const noexcept { return last_change_; }

 private:
  int iterations_;
  double last_change_;
};

// Minimum VSI at or below zero: operating point is past the stability limit.
class VoltageCollapseError : public Error {
 public:
  explicit VoltageCollapseError(double vsi_min)
      : Error("voltage stability index is non-positive (" + std::to_string(vsi_min) + ")"),
        vsi_min_(vsi_min) {}

  double vsi_min() const noexcept { return vsi_min_; }

 private:
  double vsi_min_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EnumerationCapError : public Error {
 public:
  EnumerationCapError(double size, double cap)
      : Error("oracle enumeration of " + std::to_string(size) +
              " combinations exceeds cap " + std::to_string(cap)) {}
};

}  // namespace dgopt
