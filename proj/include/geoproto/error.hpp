#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoproto {

enum class ErrorKind {
  MalformedFile,
  NonFiniteValue,
  EmptyClass,
  VersionMismatch,
  ChecksumFailure,
  TooFewSamples,
  KTooLarge,
  DegenerateScale,
  NoConvergence,
  CountTooSmall,
  NonFiniteLoss,
  DimensionMismatch,
  ConstantInput,
  InvalidConfig,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumFailure: return "ChecksumFailure";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::DegenerateScale: return "DegenerateScale";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::CountTooSmall: return "CountTooSmall";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// User or data error. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Broken internal invariant (a bug, not bad input). Exit code 2.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void ensure(bool condition, const std::string& what) {
  if (!condition) throw InvariantViolation(what);
}

}  // namespace geoproto
