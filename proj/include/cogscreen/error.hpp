#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cogscreen {

enum class ErrorKind {
  EmptyTranscript,
  DuplicateId,
  UnknownLabel,
  UnknownSplit,
  UnreadableFile,
  MalformedInput,
  MissingKey,
  DimMismatch,
  ShapeMismatch,
  SchemaError,
  NetworkError,
  NetworkForbidden,
  InvalidArgument,
  EmptySplit,
  SingleClass,
  NoPositives,
  InsufficientSamples,
  RetryBudgetExhausted,
  NumericalFailure,
  ConfigError,
  MissingSeries,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can emit
// machine-readable error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cogscreen
