#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ookb {

enum class ErrorCode {
  // validation
  schema,
  kind_mismatch,
  parse,
  precondition,
  invalid_config,
  lineage_broken,
  grounding,
  empty_extraction,
  generation_parse,
  empty_field,
  shortfall,
  empty_vocabulary,
  dimension_mismatch,
  undefined_similarity,
  embeddings_required,
  missing_tag,
  invalid_outcome,
  malformed_tag,
  ambiguous_citation,
  duplicate_outcome,
  rejected_evaluation,
  length_mismatch,
  unknown_dimension,
  already_labeled,
  missing_resolution,
  unparseable_judgments,
  // provider
  mock_miss,
  auth_config,
  auth_failure,
  timeout,
  rate_limited,
  server_error,
  provider,
  run_failure,
  // storage
  storage,
  not_found,
};

enum class ErrorCategory { validation, provider, storage };

ErrorCategory category_of(ErrorCode code);
std::string_view to_string(ErrorCode code);

/// Process exit code for an error category: 2 validation, 3 provider, 4 storage.
int exit_code_for(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  /// Message without the leading code.
  const std::string& detail() const noexcept { return detail_; }

  /// Transient provider failures eligible for retry (timeout, 429, 5xx).
  bool retryable() const noexcept;

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace ookb
