#include "ookb/error.h"

namespace ookb {

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::mock_miss:
    case ErrorCode::auth_config:
    case ErrorCode::auth_failure:
    case ErrorCode::timeout:
    case ErrorCode::rate_limited:
    case ErrorCode::server_error:
    case ErrorCode::provider:
    case ErrorCode::run_failure:
      return ErrorCategory::provider;
    case ErrorCode::storage:
    case ErrorCode::not_found:
      return ErrorCategory::storage;
    default:
      return ErrorCategory::validation;
  }
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return "schema";
    case ErrorCode::kind_mismatch: return "kind-mismatch";
    case ErrorCode::parse: return "parse";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::lineage_broken: return "lineage-broken";
    case ErrorCode::grounding: return "grounding";
    case ErrorCode::empty_extraction: return "empty-extraction";
    case ErrorCode::generation_parse: return "generation-parse";
    case ErrorCode::empty_field: return "empty-field";
    case ErrorCode::shortfall: return "shortfall";
    case ErrorCode::empty_vocabulary: return "empty-vocabulary";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::undefined_similarity: return "undefined-similarity";
    case ErrorCode::embeddings_required: return "embeddings-required";
    case ErrorCode::missing_tag: return "missing-tag";
    case ErrorCode::invalid_outcome: return "invalid-outcome";
    case ErrorCode::malformed_tag: return "malformed-tag";
    case ErrorCode::ambiguous_citation: return "ambiguous-citation";
    case ErrorCode::duplicate_outcome: return "duplicate-outcome";
    case ErrorCode::rejected_evaluation: return "rejected-evaluation";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::unknown_dimension: return "unknown-dimension";
    case ErrorCode::already_labeled: return "already-labeled";
    case ErrorCode::missing_resolution: return "missing-resolution";
    case ErrorCode::unparseable_judgments: return "unparseable-judgments";
    case ErrorCode::mock_miss: return "mock-miss";
    case ErrorCode::auth_config: return "auth-config";
    case ErrorCode::auth_failure: return "auth-failure";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::rate_limited: return "rate-limited";
    case ErrorCode::server_error: return "server-error";
    case ErrorCode::provider: return "provider";
    case ErrorCode::run_failure: return "run-failure";
    case ErrorCode::storage: return "storage";
    case ErrorCode::not_found: return "not-found";
  }
  return "unknown";
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::validation: return 2;
    case ErrorCategory::provider: return 3;
    case ErrorCategory::storage: return 4;
  }
  return 1;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

bool Error::retryable() const noexcept {
  return code_ == ErrorCode::timeout || code_ == ErrorCode::rate_limited ||
         code_ == ErrorCode::server_error;
}

}  // namespace ookb
