#include "cogscreen/error.hpp"

namespace cogscreen {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyTranscript: return "EmptyTranscript";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::UnknownSplit: return "UnknownSplit";
    case ErrorKind::UnreadableFile: return "UnreadableFile";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::MissingKey: return "MissingKey";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NetworkError: return "NetworkError";
    case ErrorKind::NetworkForbidden: return "NetworkForbidden";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::RetryBudgetExhausted: return "RetryBudgetExhausted";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingSeries: return "MissingSeries";
  }
  return "Unknown";
}

}  // namespace cogscreen
