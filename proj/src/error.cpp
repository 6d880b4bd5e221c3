#include "avh/error.hpp"

namespace avh {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::TruncatedData: return "TruncatedData";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::InvalidSample: return "InvalidSample";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::EmptyClip: return "EmptyClip";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InvalidCategory: return "InvalidCategory";
    case ErrorKind::BadSegment: return "BadSegment";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::FakeInUnsupervised: return "FakeInUnsupervised";
    case ErrorKind::MissingFeatureFile: return "MissingFeatureFile";
  }
  return "Unknown";
}

namespace {
std::string format_message(ErrorKind kind, const std::string& message,
                           std::optional<std::size_t> line) {
  std::string out(to_string(kind));
  if (line) out += " (line " + std::to_string(*line) + ")";
  out += ": ";
  out += message;
  return out;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::size_t> line)
    : std::runtime_error(format_message(kind, message, line)),
      kind_(kind),
      detail_(message),
      line_(line) {}

}  // namespace avh
