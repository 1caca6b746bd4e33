// Persisted domain types. Every artifact carries an ArtifactHeader; payload
// fields are serialized under "payload" by the artifact store.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace ookb {

enum class ArtifactKind {
  source_document,
  fact_list,
  qa_set,
  experiment_spec,
  experiment_output,
  evaluation_spec,
  evaluated_output,
  label_session,
};

inline constexpr std::array<ArtifactKind, 8> kAllKinds = {
    ArtifactKind::source_document,   ArtifactKind::fact_list,
    ArtifactKind::qa_set,            ArtifactKind::experiment_spec,
    ArtifactKind::experiment_output, ArtifactKind::evaluation_spec,
    ArtifactKind::evaluated_output,  ArtifactKind::label_session,
};

std::string_view to_string(ArtifactKind kind);
ArtifactKind kind_from_string(std::string_view text);

using Metadata = std::map<std::string, std::string>;
using Embedding = std::vector<double>;

// Metadata keys shared across stages.
namespace meta {
inline constexpr std::string_view prompt_identifier = "prompt_identifier";
inline constexpr std::string_view model = "model";
inline constexpr std::string_view retrieval_strategy = "retrieval_strategy";
inline constexpr std::string_view ground_truth = "ground_truth";
inline constexpr std::string_view config_hash = "config_hash";
inline constexpr std::string_view domain = "domain";
}  // namespace meta

struct ArtifactHeader {
  std::string artifact_id;
  ArtifactKind kind = ArtifactKind::source_document;
  std::string created_at;
  std::string creator;
  std::vector<std::string> upstream_ids;
  Metadata metadata;

  bool operator==(const ArtifactHeader&) const = default;
};

struct Sentence {
  int index = 0;
  std::string text;
  bool operator==(const Sentence&) const = default;
};

struct AtomicFact {
  int fact_id = 0;
  std::string text;
  int source_sentence = 0;
  bool operator==(const AtomicFact&) const = default;
};

struct QAPair {
  int pair_id = 0;
  std::string question;
  std::string answer;
  // Absent only in synthetic query sets, which have no grounding fact.
  std::optional<int> source_fact_id;
  std::optional<Embedding> embedding;
  bool operator==(const QAPair&) const = default;
};

struct SourceDocument {
  static constexpr ArtifactKind kKind = ArtifactKind::source_document;
  ArtifactHeader header;
  std::string title;
  std::string body;
  std::vector<Sentence> sentences;
  bool operator==(const SourceDocument&) const = default;
};

struct FactList {
  static constexpr ArtifactKind kKind = ArtifactKind::fact_list;
  ArtifactHeader header;
  std::vector<AtomicFact> facts;
  bool operator==(const FactList&) const = default;
};

struct QASet {
  static constexpr ArtifactKind kKind = ArtifactKind::qa_set;
  ArtifactHeader header;
  std::vector<QAPair> pairs;

  /// True for synthetic query sets (metadata ground_truth=absent).
  bool ground_truth_absent() const;
  bool operator==(const QASet&) const = default;
};

enum class PromptName { basic, conservative, opinion_based, custom };

struct PromptSpec {
  PromptName name = PromptName::basic;
  std::string identifier;
  std::string text;
  bool requires_context = false;
  bool operator==(const PromptSpec&) const = default;
};

enum class RetrievalKind { direct, long_in_context, basic_rag, hyde_rag, custom };

struct RetrievalConfig {
  RetrievalKind kind = RetrievalKind::direct;
  std::string custom_name;  // only for RetrievalKind::custom
  int k = 5;
  int hyde_answer_count = 3;

  std::string name() const;
  bool operator==(const RetrievalConfig&) const = default;
};

enum class ExperimentType { leave_one_out, synthetic_queries };

struct ExperimentSpec {
  static constexpr ArtifactKind kKind = ArtifactKind::experiment_spec;
  ArtifactHeader header;
  ExperimentType type = ExperimentType::leave_one_out;
  PromptSpec prompt;
  RetrievalConfig retrieval;
  std::string target_model;
  double temperature = 0.0;
  std::string kb_id;
  // Synthetic-query experiments draw questions from a separate set.
  std::optional<std::string> questions_id;
  bool operator==(const ExperimentSpec&) const = default;
};

struct ContextEntry {
  int context_index = 0;
  int pair_id = 0;
  std::string question;
  std::string answer;
  bool operator==(const ContextEntry&) const = default;
};

enum class ResponseStatus { ok, error };

struct SavedResponse {
  int question_id = 0;
  std::string question;
  std::string expected_answer;
  std::string raw_text;
  std::optional<int> cited_context_index;
  // Set when the response named a citation that could not be used.
  std::optional<std::string> citation_error;
  std::vector<ContextEntry> context_snapshot;
  std::string prompt_identifier;
  std::string model;
  std::string timestamp;
  ResponseStatus status = ResponseStatus::ok;
  std::string error;
  bool operator==(const SavedResponse&) const = default;
};

struct ExperimentOutput {
  static constexpr ArtifactKind kKind = ArtifactKind::experiment_output;
  ArtifactHeader header;
  std::vector<SavedResponse> responses;
  bool operator==(const ExperimentOutput&) const = default;
};

struct EvaluationSpec {
  static constexpr ArtifactKind kKind = ArtifactKind::evaluation_spec;
  ArtifactHeader header;
  std::string evaluation_name;
  std::string prompt_identifier;
  std::string prompt_content;
  std::vector<std::string> evaluation_outcomes;
  std::string tag_name;
  bool uses_expected_answer = true;
  bool operator==(const EvaluationSpec&) const = default;
};

/// Outcome recorded when the judge response could not be parsed.
inline constexpr std::string_view kUnparseable = "unparseable";

struct EvaluatedResponse {
  int question_id = 0;
  std::string question;
  std::string model_answer;
  std::string expected_answer;
  std::map<std::string, std::string> outcomes;   // evaluation_name -> outcome
  std::map<std::string, std::string> judge_raw;  // evaluation_name -> raw judge text
  std::string judge_model;
  bool operator==(const EvaluatedResponse&) const = default;
};

struct EvaluatedOutput {
  static constexpr ArtifactKind kKind = ArtifactKind::evaluated_output;
  ArtifactHeader header;
  std::vector<EvaluatedResponse> responses;
  bool operator==(const EvaluatedOutput&) const = default;
};

struct LabelItem {
  std::string item_id;
  std::string evaluated_output_id;
  int question_id = 0;
  std::string question;
  std::string model_answer;
  std::optional<std::string> expected_answer;
  Metadata stratum;
  std::optional<std::string> auto_label;  // judge outcome, when available
  bool operator==(const LabelItem&) const = default;
};

struct LabelSchema {
  std::string evaluation_spec_id;
  std::string evaluation_name;
  std::vector<std::string> outcomes;
  bool operator==(const LabelSchema&) const = default;
};

enum class SessionStatus { open, complete };

struct LabelSession {
  static constexpr ArtifactKind kKind = ArtifactKind::label_session;
  ArtifactHeader header;
  LabelSchema schema;
  std::vector<LabelItem> items;
  std::vector<std::string> annotators;
  std::map<std::string, std::vector<std::string>> presentation_order;
  std::map<std::string, std::map<std::string, std::string>> labels;  // annotator -> item -> outcome
  SessionStatus status = SessionStatus::open;
  std::map<std::string, std::string> resolutions;
  std::map<std::string, std::string> consensus;
  bool operator==(const LabelSession&) const = default;
};

using AnyArtifact = std::variant<SourceDocument, FactList, QASet, ExperimentSpec, ExperimentOutput,
                                 EvaluationSpec, EvaluatedOutput, LabelSession>;

const ArtifactHeader& header_of(const AnyArtifact& artifact);

// Invariant checks; throw Error(ErrorCode::schema) naming the failing field.
void validate(const ArtifactHeader& header);
void validate(const SourceDocument& doc);
void validate(const FactList& facts);
void validate(const QASet& set);
void validate(const ExperimentSpec& spec);
void validate(const ExperimentOutput& output);
void validate(const EvaluationSpec& spec);
void validate(const EvaluatedOutput& output);
void validate(const LabelSession& session);
void validate(const AnyArtifact& artifact);

// JSON mapping (field names match the on-disk schema).
void to_json(nlohmann::json& j, const ArtifactHeader& v);
void from_json(const nlohmann::json& j, ArtifactHeader& v);
void to_json(nlohmann::json& j, const QAPair& v);
void from_json(const nlohmann::json& j, QAPair& v);
void to_json(nlohmann::json& j, const PromptSpec& v);
void from_json(const nlohmann::json& j, PromptSpec& v);
void to_json(nlohmann::json& j, const RetrievalConfig& v);
void from_json(const nlohmann::json& j, RetrievalConfig& v);
void to_json(nlohmann::json& j, const ContextEntry& v);
void from_json(const nlohmann::json& j, ContextEntry& v);
void to_json(nlohmann::json& j, const SavedResponse& v);
void from_json(const nlohmann::json& j, SavedResponse& v);
void to_json(nlohmann::json& j, const EvaluatedResponse& v);
void from_json(const nlohmann::json& j, EvaluatedResponse& v);
void to_json(nlohmann::json& j, const LabelItem& v);
void from_json(const nlohmann::json& j, LabelItem& v);

/// Payload object for an artifact (everything except the header).
nlohmann::json payload_to_json(const AnyArtifact& artifact);
AnyArtifact artifact_from_json(ArtifactHeader header, const nlohmann::json& payload);

std::string_view to_string(PromptName name);
PromptName prompt_name_from_string(std::string_view text);
std::string_view to_string(RetrievalKind kind);
RetrievalKind retrieval_kind_from_string(std::string_view text);

}  // namespace ookb
