#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nsrgs {

enum class ErrorKind {
  SingularInput,
  DivergenceDetected,
  DimensionMismatch,
  EigSolverFailure,
  NonFiniteObjective,
  ParseError,
  DuplicateEdge,
  TruthRequired,
  IoError,
  InvalidArgs,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularInput: return "SingularInput";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EigSolverFailure: return "EigSolverFailure";
    case ErrorKind::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::TruthRequired: return "TruthRequired";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidArgs: return "InvalidArgs";
  }
  return "Unknown";
}

/// Base of every exception thrown by the library. `blocks()` lists the
/// (0-based) block indices involved, when the failure is block-local.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::vector<std::size_t> blocks = {})
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        blocks_(std::move(blocks)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::vector<std::size_t>& blocks() const noexcept { return blocks_; }

 private:
  ErrorKind kind_;
  std::vector<std::size_t> blocks_;
};

#define NSRGS_DEFINE_ERROR(Name)                                                   \
  class Name : public Error {                                                      \
   public:                                                                         \
    explicit Name(const std::string& what, std::vector<std::size_t> blocks = {})   \
        : Error(ErrorKind::Name, what, std::move(blocks)) {}                       \
  };

NSRGS_DEFINE_ERROR(SingularInput)
NSRGS_DEFINE_ERROR(DivergenceDetected)
NSRGS_DEFINE_ERROR(DimensionMismatch)
NSRGS_DEFINE_ERROR(EigSolverFailure)
NSRGS_DEFINE_ERROR(NonFiniteObjective)
NSRGS_DEFINE_ERROR(DuplicateEdge)
NSRGS_DEFINE_ERROR(TruthRequired)
NSRGS_DEFINE_ERROR(IoError)
NSRGS_DEFINE_ERROR(InvalidArgs)

#undef NSRGS_DEFINE_ERROR

/// Malformed input file; `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::ParseError,
              line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nsrgs
