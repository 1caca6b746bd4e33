// Structured-output parsing for model responses. All functions are pure.
#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ookb {

struct TagSpec {
  std::string tag_name;
  std::vector<std::string> allowed_outcomes;
};

/// Throws duplicate_outcome / schema errors for an unusable spec.
void validate(const TagSpec& spec);

/// Content of the last <tag>...</tag> span, trimmed, mapped case-insensitively
/// onto the spec's canonical outcome spelling. Text outside tags is ignored.
/// Errors: missing_tag, malformed_tag (unclosed), invalid_outcome.
std::string extract_tag(std::string_view response_text, const TagSpec& spec);

/// Citation patterns: "fact N", "(N)", "[N]". Each regex's first capture
/// group is the cited integer.
std::vector<std::regex> default_citation_patterns();

/// nullopt when the text says "no citation" or names no integer in a citation
/// pattern; throws ambiguous_citation for two or more distinct integers.
std::optional<int> parse_citation(std::string_view response_text);
std::optional<int> parse_citation(std::string_view response_text,
                                  const std::vector<std::regex>& patterns);

/// Parses a JSON object or array from model output, tolerating code fences
/// and surrounding prose. Throws generation_parse.
nlohmann::json parse_json_response(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace ookb
