#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace saap {

// Every failure the pipeline reports carries one of these codes. The API maps
// them to HTTP statuses and the CLI to exit codes; names are part of the wire
// format and must not change.
enum class ErrorCode {
  kConfiguration,
  kParseFailure,
  kSchemaViolation,
  kNotFound,
  kPrecondition,
  kRejected,
  kIntegrity,
  kRetryable,
  kFatal,
  kStubMiss,
  kContextOverflow,
  kEmptyCorpus,
  kInsufficientData,
  kTypeError,
  kKeyError,
  kInsufficientGroups,
  kInvalidPhase,
  kBudgetExhausted,
  kTurnLimitExceeded,
  kVerdictParseFailure,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ConfigurationError : public Error {
 public:
  explicit ConfigurationError(const std::string& message)
      : Error(ErrorCode::kConfiguration, message) {}
};

// Syntax-level failure. `position` is a byte offset for structured text and
// `row` a zero-based line index (0 = header) for CSV input.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& message, std::size_t position,
               std::ptrdiff_t row = -1)
      : Error(ErrorCode::kParseFailure, message),
        position_(position),
        row_(row) {}

  std::size_t position() const noexcept { return position_; }
  std::ptrdiff_t row() const noexcept { return row_; }

 private:
  std::size_t position_;
  std::ptrdiff_t row_;
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& message)
      : Error(ErrorCode::kNotFound, message) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message)
      : Error(ErrorCode::kPrecondition, message) {}
};

// Input that is well-formed but refused (e.g. a document with an empty body).
class Rejected : public Error {
 public:
  explicit Rejected(const std::string& message)
      : Error(ErrorCode::kRejected, message) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& message)
      : Error(ErrorCode::kIntegrity, message) {}
};

class RetryableError : public Error {
 public:
  explicit RetryableError(const std::string& message)
      : Error(ErrorCode::kRetryable, message) {}
};

class FatalProviderError : public Error {
 public:
  explicit FatalProviderError(const std::string& message)
      : Error(ErrorCode::kFatal, message) {}
};

class StubMiss : public Error {
 public:
  explicit StubMiss(std::string digest)
      : Error(ErrorCode::kStubMiss, "stub has no response for digest " + digest),
        digest_(std::move(digest)) {}

  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

class ContextOverflow : public Error {
 public:
  explicit ContextOverflow(const std::string& message)
      : Error(ErrorCode::kContextOverflow, message) {}
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& message)
      : Error(ErrorCode::kEmptyCorpus, message) {}
};

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& message)
      : Error(ErrorCode::kInsufficientData, message) {}
};

class TypeError : public Error {
 public:
  explicit TypeError(const std::string& message)
      : Error(ErrorCode::kTypeError, message) {}
};

class KeyError : public Error {
 public:
  explicit KeyError(const std::string& message)
      : Error(ErrorCode::kKeyError, message) {}
};

class InsufficientGroups : public Error {
 public:
  explicit InsufficientGroups(const std::string& message)
      : Error(ErrorCode::kInsufficientGroups, message) {}
};

class InvalidPhase : public Error {
 public:
  explicit InvalidPhase(const std::string& message)
      : Error(ErrorCode::kInvalidPhase, message) {}
};

class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(const std::string& message)
      : Error(ErrorCode::kBudgetExhausted, message) {}
};

class VerdictParseFailure : public Error {
 public:
  VerdictParseFailure(const std::string& message, std::string raw_text)
      : Error(ErrorCode::kVerdictParseFailure, message),
        raw_text_(std::move(raw_text)) {}

  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  std::string raw_text_;
};

}  // namespace saap
