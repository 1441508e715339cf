#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shazam {

enum class ErrorKind {
  InvalidArgument,
  UnsupportedFormat,
  CorruptContainer,
  InconsistentContainer,
  NumericError,
  DegenerateVector,
  EmptyCohort,
  UndefinedCorrelation,
  UndefinedCIndex,
  UndefinedTest,
  DegenerateSplit,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::UnsupportedFormat: return "unsupported-format";
    case ErrorKind::CorruptContainer: return "corrupt-container";
    case ErrorKind::InconsistentContainer: return "inconsistent-container";
    case ErrorKind::NumericError: return "numeric-error";
    case ErrorKind::DegenerateVector: return "degenerate-vector";
    case ErrorKind::EmptyCohort: return "empty-cohort";
    case ErrorKind::UndefinedCorrelation: return "undefined-correlation";
    case ErrorKind::UndefinedCIndex: return "undefined-cindex";
    case ErrorKind::UndefinedTest: return "undefined-test";
    case ErrorKind::DegenerateSplit: return "degenerate-split";
    case ErrorKind::Io: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace shazam
