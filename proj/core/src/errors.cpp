#include "saap/errors.hpp"

namespace saap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfiguration: return "configuration_error";
    case ErrorCode::kParseFailure: return "parse_failure";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kPrecondition: return "precondition_failed";
    case ErrorCode::kRejected: return "rejected";
    case ErrorCode::kIntegrity: return "integrity_violation";
    case ErrorCode::kRetryable: return "provider_unavailable";
    case ErrorCode::kFatal: return "provider_fatal";
    case ErrorCode::kStubMiss: return "stub_miss";
    case ErrorCode::kContextOverflow: return "context_overflow";
    case ErrorCode::kEmptyCorpus: return "empty_corpus";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kTypeError: return "type_error";
    case ErrorCode::kKeyError: return "unknown_key";
    case ErrorCode::kInsufficientGroups: return "insufficient_groups";
    case ErrorCode::kInvalidPhase: return "invalid_phase";
    case ErrorCode::kBudgetExhausted: return "budget_exhausted";
    case ErrorCode::kTurnLimitExceeded: return "turn_limit_exceeded";
    case ErrorCode::kVerdictParseFailure: return "verdict_parse_failure";
  }
  return "unknown";
}

}  // namespace saap
