#include "ookb/parsers.h"

#include <algorithm>
#include <cctype>
#include <set>

#include "ookb/error.h"

namespace ookb {

using nlohmann::json;

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void validate(const TagSpec& spec) {
  if (spec.tag_name.empty()) throw Error(ErrorCode::schema, "tag_name: must not be empty");
  for (unsigned char c : spec.tag_name) {
    if (!std::isalnum(c) && c != '_') {
      throw Error(ErrorCode::schema, "tag_name: must be alphanumeric or underscore");
    }
  }
  if (spec.allowed_outcomes.empty()) throw Error(ErrorCode::schema, "allowed_outcomes: must not be empty");
  std::set<std::string> seen;
  for (const auto& o : spec.allowed_outcomes) {
    if (!seen.insert(to_lower(o)).second) {
      throw Error(ErrorCode::duplicate_outcome, "allowed_outcomes: duplicate outcome '" + o + "'");
    }
  }
}

std::string extract_tag(std::string_view response_text, const TagSpec& spec) {
  const std::string haystack = to_lower(response_text);
  const std::string open = "<" + to_lower(spec.tag_name) + ">";
  const std::string close = "</" + to_lower(spec.tag_name) + ">";

  const auto open_pos = haystack.rfind(open);
  if (open_pos == std::string::npos) {
    throw Error(ErrorCode::missing_tag, "no <" + spec.tag_name + "> tag in response");
  }
  const auto content_start = open_pos + open.size();
  const auto close_pos = haystack.find(close, content_start);
  if (close_pos == std::string::npos) {
    throw Error(ErrorCode::malformed_tag, "unclosed <" + spec.tag_name + "> tag");
  }
  const std::string content = trim(response_text.substr(content_start, close_pos - content_start));
  const std::string folded = to_lower(content);
  for (const auto& outcome : spec.allowed_outcomes) {
    if (to_lower(outcome) == folded) return outcome;
  }
  throw Error(ErrorCode::invalid_outcome, content);
}

std::vector<std::regex> default_citation_patterns() {
  const auto flags = std::regex::ECMAScript | std::regex::icase;
  return {std::regex(R"(\bfacts?\s*#?\s*(\d+))", flags), std::regex(R"(\(\s*(\d+)\s*\))", flags),
          std::regex(R"(\[\s*(\d+)\s*\])", flags)};
}

std::optional<int> parse_citation(std::string_view response_text) {
  static const std::vector<std::regex> patterns = default_citation_patterns();
  return parse_citation(response_text, patterns);
}

std::optional<int> parse_citation(std::string_view response_text,
                                  const std::vector<std::regex>& patterns) {
  if (to_lower(response_text).find("no citation") != std::string::npos) return std::nullopt;
  const std::string text(response_text);
  std::set<int> cited;
  for (const auto& pattern : patterns) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern); it != std::sregex_iterator(); ++it) {
      const auto digits = (*it)[1].str();
      if (digits.size() > 9) continue;
      cited.insert(std::stoi(digits));
    }
  }
  if (cited.empty()) return std::nullopt;
  if (cited.size() > 1) {
    std::string list;
    for (int c : cited) list += (list.empty() ? "" : ", ") + std::to_string(c);
    throw Error(ErrorCode::ambiguous_citation, "response cites " + list);
  }
  return *cited.begin();
}

json parse_json_response(std::string_view text) {
  std::string body = trim(text);
  // Strip a surrounding ``` or ```json fence.
  if (body.rfind("```", 0) == 0) {
    const auto first_newline = body.find('\n');
    const auto last_fence = body.rfind("```");
    if (first_newline != std::string::npos && last_fence > first_newline) {
      body = trim(std::string_view(body).substr(first_newline + 1, last_fence - first_newline - 1));
    }
  }
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
  }
  // Fall back to the outermost {...} or [...] span.
  const auto start = body.find_first_of("{[");
  if (start != std::string::npos) {
    const char closer = body[start] == '{' ? '}' : ']';
    const auto end = body.rfind(closer);
    if (end != std::string::npos && end > start) {
      try {
        return json::parse(body.substr(start, end - start + 1));
      } catch (const json::parse_error&) {
      }
    }
  }
  throw Error(ErrorCode::generation_parse, "response is not valid JSON: \"" + body.substr(0, 120) + "\"");
}

}  // namespace ookb
