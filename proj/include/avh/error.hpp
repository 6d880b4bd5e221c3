#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avh {

enum class ErrorKind {
  // audio / feature containers
  MalformedHeader,
  UnsupportedEncoding,
  TruncatedData,
  VersionMismatch,
  NonFiniteValue,
  InvalidSample,
  IoFailure,
  // analysis
  EmptyClip,
  TooShort,
  // metrics
  SingleClass,
  EmptyInput,
  InvalidArgument,
  // manifest
  ParseError,
  DuplicateId,
  InvalidCategory,
  BadSegment,
  // model / training
  DimensionMismatch,
  EmptyDataset,
  FakeInUnsupervised,
  MissingFeatureFile,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library is an `avh::Error` carrying a kind, so
/// callers (and the CLI exit-code mapping) can branch on it without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind/line prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }
  /// 1-based line number for text-format parse failures.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::string detail_;
  std::optional<std::size_t> line_;
};

}  // namespace avh
