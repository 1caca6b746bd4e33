#include "ookb/types.h"

#include <algorithm>
#include <cctype>
#include <set>

#include "ookb/error.h"

namespace ookb {

using nlohmann::json;

namespace {

[[noreturn]] void schema_fail(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::schema, field + ": " + why);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string strip_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (!std::isspace(c)) out.push_back(static_cast<char>(c));
  }
  return out;
}

bool is_hex_id(std::string_view id) {
  return id.size() == 32 && std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

template <class T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

void require_metadata(const ArtifactHeader& h, std::initializer_list<std::string_view> keys) {
  for (auto key : keys) {
    auto it = h.metadata.find(std::string(key));
    if (it == h.metadata.end() || it->second.empty()) {
      schema_fail("metadata." + std::string(key), "required for " + std::string(to_string(h.kind)));
    }
  }
}

void require_upstream(const ArtifactHeader& h, std::string_view expected) {
  if (h.upstream_ids.empty()) {
    schema_fail("upstream_ids", std::string(to_string(h.kind)) + " requires a " +
                                    std::string(expected) + " upstream");
  }
}

}  // namespace

std::string_view to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::source_document: return "source_document";
    case ArtifactKind::fact_list: return "fact_list";
    case ArtifactKind::qa_set: return "qa_set";
    case ArtifactKind::experiment_spec: return "experiment_spec";
    case ArtifactKind::experiment_output: return "experiment_output";
    case ArtifactKind::evaluation_spec: return "evaluation_spec";
    case ArtifactKind::evaluated_output: return "evaluated_output";
    case ArtifactKind::label_session: return "label_session";
  }
  return "unknown";
}

ArtifactKind kind_from_string(std::string_view text) {
  for (auto kind : kAllKinds) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::schema, "kind: unknown artifact kind '" + std::string(text) + "'");
}

std::string_view to_string(PromptName name) {
  switch (name) {
    case PromptName::basic: return "basic";
    case PromptName::conservative: return "conservative";
    case PromptName::opinion_based: return "opinion_based";
    case PromptName::custom: return "custom";
  }
  return "custom";
}

PromptName prompt_name_from_string(std::string_view text) {
  for (auto n : {PromptName::basic, PromptName::conservative, PromptName::opinion_based,
                 PromptName::custom}) {
    if (to_string(n) == text) return n;
  }
  throw Error(ErrorCode::schema, "prompt.name: unknown prompt '" + std::string(text) + "'");
}

std::string_view to_string(RetrievalKind kind) {
  switch (kind) {
    case RetrievalKind::direct: return "direct";
    case RetrievalKind::long_in_context: return "long_in_context";
    case RetrievalKind::basic_rag: return "basic_rag";
    case RetrievalKind::hyde_rag: return "hyde_rag";
    case RetrievalKind::custom: return "custom";
  }
  return "custom";
}

RetrievalKind retrieval_kind_from_string(std::string_view text) {
  for (auto k : {RetrievalKind::direct, RetrievalKind::long_in_context, RetrievalKind::basic_rag,
                 RetrievalKind::hyde_rag, RetrievalKind::custom}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::schema, "retrieval.kind: unknown strategy '" + std::string(text) + "'");
}

std::string RetrievalConfig::name() const {
  return kind == RetrievalKind::custom ? custom_name : std::string(to_string(kind));
}

bool QASet::ground_truth_absent() const {
  auto it = header.metadata.find(std::string(meta::ground_truth));
  return it != header.metadata.end() && it->second == "absent";
}

const ArtifactHeader& header_of(const AnyArtifact& artifact) {
  return std::visit([](const auto& a) -> const ArtifactHeader& { return a.header; }, artifact);
}

// ---------------------------------------------------------------------------
// Validation

void validate(const ArtifactHeader& h) {
  if (!is_hex_id(h.artifact_id)) schema_fail("artifact_id", "must be 32 lowercase hex chars");
  if (h.created_at.size() != 20 || h.created_at.back() != 'Z') {
    schema_fail("created_at", "must be RFC 3339 UTC with second precision");
  }
  if (h.creator.empty()) schema_fail("creator", "must not be empty");
  std::set<std::string> seen;
  for (const auto& id : h.upstream_ids) {
    if (!is_hex_id(id)) schema_fail("upstream_ids", "malformed id '" + id + "'");
    if (!seen.insert(id).second) schema_fail("upstream_ids", "duplicate id '" + id + "'");
    if (id == h.artifact_id) schema_fail("upstream_ids", "artifact lists itself upstream");
  }
}

void validate(const SourceDocument& doc) {
  validate(doc.header);
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    if (doc.sentences[i].index != static_cast<int>(i) + 1) {
      schema_fail("sentences", "indices must be contiguous starting at 1");
    }
  }
  std::string joined;
  for (const auto& s : doc.sentences) joined += s.text;
  if (strip_whitespace(joined) != strip_whitespace(doc.body)) {
    schema_fail("sentences", "do not reconstruct body");
  }
}

void validate(const FactList& facts) {
  validate(facts.header);
  require_upstream(facts.header, "source_document");
  require_metadata(facts.header, {meta::prompt_identifier, meta::model});
  std::set<int> ids;
  for (const auto& f : facts.facts) {
    if (!ids.insert(f.fact_id).second) schema_fail("fact_id", "fact_id not unique");
    if (f.text.empty()) schema_fail("facts.text", "must not be empty");
    if (f.source_sentence < 1) schema_fail("facts.source_sentence", "must be positive");
  }
}

void validate(const QASet& set) {
  validate(set.header);
  require_upstream(set.header, "fact_list");
  const bool synthetic = set.ground_truth_absent();
  std::set<int> ids;
  std::optional<std::size_t> dim;
  for (const auto& p : set.pairs) {
    if (!ids.insert(p.pair_id).second) schema_fail("pair_id", "pair_id not unique");
    if (p.question.empty()) schema_fail("question", "must not be empty");
    if (!synthetic) {
      if (p.answer.empty()) schema_fail("answer", "must not be empty");
      if (!p.source_fact_id) schema_fail("source_fact_id", "required for grounded pairs");
    }
    if (p.embedding) {
      if (dim && *dim != p.embedding->size()) schema_fail("embedding", "dimension mismatch");
      dim = p.embedding->size();
    }
  }
}

void validate(const ExperimentSpec& spec) {
  validate(spec.header);
  require_upstream(spec.header, "qa_set");
  require_metadata(spec.header,
                   {meta::prompt_identifier, meta::retrieval_strategy, "k", meta::model, "kb_id"});
  if (spec.retrieval.k < 1) schema_fail("retrieval.k", "must be >= 1");
  if (spec.retrieval.hyde_answer_count < 1) schema_fail("retrieval.hyde_answer_count", "must be >= 1");
  if (spec.temperature < 0) schema_fail("temperature", "must be >= 0");
  if (spec.kb_id.empty()) schema_fail("kb_id", "must not be empty");
  if (spec.prompt.requires_context && spec.retrieval.kind == RetrievalKind::direct) {
    schema_fail("retrieval", "prompt '" + spec.prompt.identifier + "' requires context");
  }
  if (spec.type == ExperimentType::synthetic_queries && !spec.questions_id) {
    schema_fail("questions_id", "required for synthetic query experiments");
  }
}

void validate(const ExperimentOutput& output) {
  validate(output.header);
  require_upstream(output.header, "experiment_spec");
  require_metadata(output.header, {meta::prompt_identifier, meta::retrieval_strategy, meta::model});
  auto type = output.header.metadata.find("experiment_type");
  const bool loo = type == output.header.metadata.end() || type->second == "leave_one_out";
  for (const auto& r : output.responses) {
    for (std::size_t i = 0; i < r.context_snapshot.size(); ++i) {
      const auto& entry = r.context_snapshot[i];
      if (entry.context_index != static_cast<int>(i) + 1) {
        schema_fail("context_snapshot", "indices must be contiguous starting at 1");
      }
      if (loo && entry.pair_id == r.question_id) {
        schema_fail("context_snapshot", "held-out pair present in context");
      }
    }
    if (r.cited_context_index &&
        (*r.cited_context_index < 1 ||
         *r.cited_context_index > static_cast<int>(r.context_snapshot.size()))) {
      schema_fail("cited_context_index", "not a valid context index");
    }
  }
}

void validate(const EvaluationSpec& spec) {
  validate(spec.header);
  require_metadata(spec.header, {meta::prompt_identifier});
  if (spec.evaluation_name.empty()) schema_fail("evaluation_name", "must not be empty");
  if (spec.tag_name.empty()) schema_fail("tag_name", "must not be empty");
  for (unsigned char c : spec.tag_name) {
    if (!std::isalnum(c) && c != '_') schema_fail("tag_name", "must be alphanumeric or underscore");
  }
  if (spec.evaluation_outcomes.empty()) schema_fail("evaluation_outcomes", "must not be empty");
  std::set<std::string> seen;
  for (const auto& o : spec.evaluation_outcomes) {
    if (o.empty()) schema_fail("evaluation_outcomes", "outcome must not be empty");
    if (!seen.insert(lower(o)).second) {
      throw Error(ErrorCode::duplicate_outcome, "evaluation_outcomes: duplicate outcome '" + o + "'");
    }
  }
}

void validate(const EvaluatedOutput& output) {
  validate(output.header);
  require_upstream(output.header, "experiment_output");
  require_metadata(output.header, {meta::model});
  for (const auto& r : output.responses) {
    for (const auto& [name, outcome] : r.outcomes) {
      if (name.empty() || outcome.empty()) schema_fail("outcomes", "empty evaluation name or outcome");
    }
  }
}

void validate(const LabelSession& session) {
  validate(session.header);
  require_upstream(session.header, "evaluated_output");
  if (session.schema.outcomes.empty()) schema_fail("label_schema.outcomes", "must not be empty");
  const std::set<std::string> outcomes(session.schema.outcomes.begin(), session.schema.outcomes.end());
  std::set<std::string> items;
  for (const auto& item : session.items) {
    if (!items.insert(item.item_id).second) schema_fail("items", "duplicate item '" + item.item_id + "'");
  }
  std::set<std::string> annotators;
  for (const auto& a : session.annotators) {
    if (a.empty() || !annotators.insert(a).second) schema_fail("annotators", "must be distinct non-empty ids");
  }
  for (const auto& [annotator, order] : session.presentation_order) {
    if (!annotators.count(annotator)) schema_fail("presentation_order", "unknown annotator " + annotator);
    std::set<std::string> ordered(order.begin(), order.end());
    if (ordered != items || order.size() != items.size()) {
      schema_fail("presentation_order", "must be a permutation of items for " + annotator);
    }
  }
  std::size_t filled = 0;
  for (const auto& [annotator, cells] : session.labels) {
    if (!annotators.count(annotator)) schema_fail("labels", "unknown annotator " + annotator);
    for (const auto& [item, outcome] : cells) {
      if (!items.count(item)) schema_fail("labels", "unknown item " + item);
      if (!outcomes.count(outcome)) schema_fail("labels", "outcome '" + outcome + "' not in schema");
      ++filled;
    }
  }
  if (session.status == SessionStatus::complete && filled != items.size() * annotators.size()) {
    schema_fail("status", "complete session has unlabeled cells");
  }
  for (const auto& [item, outcome] : session.consensus) {
    if (!items.count(item)) schema_fail("consensus", "unknown item " + item);
    if (!outcomes.count(outcome)) schema_fail("consensus", "outcome '" + outcome + "' not in schema");
  }
}

void validate(const AnyArtifact& artifact) {
  std::visit([](const auto& a) { validate(a); }, artifact);
  if (header_of(artifact).kind != std::visit([](const auto& a) { return a.kKind; }, artifact)) {
    schema_fail("kind", "header kind does not match payload type");
  }
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const ArtifactHeader& v) {
  j = json{{"artifact_id", v.artifact_id}, {"kind", to_string(v.kind)},
           {"created_at", v.created_at},   {"creator", v.creator},
           {"upstream_ids", v.upstream_ids}, {"metadata", v.metadata}};
}

void from_json(const json& j, ArtifactHeader& v) {
  static const std::set<std::string> fields = {"artifact_id", "kind",         "created_at",
                                               "creator",     "upstream_ids", "metadata"};
  for (const auto& [key, _] : j.items()) {
    if (!fields.count(key)) schema_fail("header." + key, "unexpected field");
  }
  j.at("artifact_id").get_to(v.artifact_id);
  v.kind = kind_from_string(j.at("kind").get<std::string>());
  j.at("created_at").get_to(v.created_at);
  j.at("creator").get_to(v.creator);
  j.at("upstream_ids").get_to(v.upstream_ids);
  j.at("metadata").get_to(v.metadata);
}

void to_json(json& j, const QAPair& v) {
  j = json{{"pair_id", v.pair_id}, {"question", v.question}, {"answer", v.answer}};
  put_optional(j, "source_fact_id", v.source_fact_id);
  put_optional(j, "embedding", v.embedding);
}

void from_json(const json& j, QAPair& v) {
  j.at("pair_id").get_to(v.pair_id);
  j.at("question").get_to(v.question);
  j.at("answer").get_to(v.answer);
  v.source_fact_id = optional_field<int>(j, "source_fact_id");
  v.embedding = optional_field<Embedding>(j, "embedding");
}

void to_json(json& j, const PromptSpec& v) {
  j = json{{"name", to_string(v.name)},
           {"identifier", v.identifier},
           {"text", v.text},
           {"requires_context", v.requires_context}};
}

void from_json(const json& j, PromptSpec& v) {
  v.name = prompt_name_from_string(j.at("name").get<std::string>());
  j.at("identifier").get_to(v.identifier);
  j.at("text").get_to(v.text);
  j.at("requires_context").get_to(v.requires_context);
}

void to_json(json& j, const RetrievalConfig& v) {
  j = json{{"kind", to_string(v.kind)},
           {"custom_name", v.custom_name},
           {"k", v.k},
           {"hyde_answer_count", v.hyde_answer_count}};
}

void from_json(const json& j, RetrievalConfig& v) {
  v.kind = retrieval_kind_from_string(j.at("kind").get<std::string>());
  v.custom_name = j.value("custom_name", std::string());
  v.k = j.value("k", 5);
  v.hyde_answer_count = j.value("hyde_answer_count", 3);
}

void to_json(json& j, const ContextEntry& v) {
  j = json{{"context_index", v.context_index},
           {"pair_id", v.pair_id},
           {"question", v.question},
           {"answer", v.answer}};
}

void from_json(const json& j, ContextEntry& v) {
  j.at("context_index").get_to(v.context_index);
  j.at("pair_id").get_to(v.pair_id);
  j.at("question").get_to(v.question);
  j.at("answer").get_to(v.answer);
}

void to_json(json& j, const SavedResponse& v) {
  j = json{{"question_id", v.question_id},
           {"question", v.question},
           {"expected_answer", v.expected_answer},
           {"raw_text", v.raw_text},
           {"context_snapshot", v.context_snapshot},
           {"prompt_identifier", v.prompt_identifier},
           {"model", v.model},
           {"timestamp", v.timestamp},
           {"status", v.status == ResponseStatus::ok ? "ok" : "error"},
           {"error", v.error}};
  put_optional(j, "cited_context_index", v.cited_context_index);
  put_optional(j, "citation_error", v.citation_error);
}

void from_json(const json& j, SavedResponse& v) {
  j.at("question_id").get_to(v.question_id);
  j.at("question").get_to(v.question);
  j.at("expected_answer").get_to(v.expected_answer);
  j.at("raw_text").get_to(v.raw_text);
  j.at("context_snapshot").get_to(v.context_snapshot);
  j.at("prompt_identifier").get_to(v.prompt_identifier);
  j.at("model").get_to(v.model);
  j.at("timestamp").get_to(v.timestamp);
  const auto status = j.at("status").get<std::string>();
  if (status != "ok" && status != "error") schema_fail("status", "must be ok or error");
  v.status = status == "ok" ? ResponseStatus::ok : ResponseStatus::error;
  j.at("error").get_to(v.error);
  v.cited_context_index = optional_field<int>(j, "cited_context_index");
  v.citation_error = optional_field<std::string>(j, "citation_error");
}

void to_json(json& j, const EvaluatedResponse& v) {
  j = json{{"question_id", v.question_id},     {"question", v.question},
           {"model_answer", v.model_answer},   {"expected_answer", v.expected_answer},
           {"outcomes", v.outcomes},           {"judge_raw", v.judge_raw},
           {"judge_model", v.judge_model}};
}

void from_json(const json& j, EvaluatedResponse& v) {
  j.at("question_id").get_to(v.question_id);
  j.at("question").get_to(v.question);
  j.at("model_answer").get_to(v.model_answer);
  j.at("expected_answer").get_to(v.expected_answer);
  j.at("outcomes").get_to(v.outcomes);
  j.at("judge_raw").get_to(v.judge_raw);
  j.at("judge_model").get_to(v.judge_model);
}

void to_json(json& j, const LabelItem& v) {
  j = json{{"item_id", v.item_id},
           {"evaluated_output_id", v.evaluated_output_id},
           {"question_id", v.question_id},
           {"question", v.question},
           {"model_answer", v.model_answer},
           {"stratum", v.stratum}};
  put_optional(j, "expected_answer", v.expected_answer);
  put_optional(j, "auto_label", v.auto_label);
}

void from_json(const json& j, LabelItem& v) {
  j.at("item_id").get_to(v.item_id);
  j.at("evaluated_output_id").get_to(v.evaluated_output_id);
  j.at("question_id").get_to(v.question_id);
  j.at("question").get_to(v.question);
  j.at("model_answer").get_to(v.model_answer);
  j.at("stratum").get_to(v.stratum);
  v.expected_answer = optional_field<std::string>(j, "expected_answer");
  v.auto_label = optional_field<std::string>(j, "auto_label");
}

namespace {

struct PayloadWriter {
  json operator()(const SourceDocument& d) const {
    json sentences = json::array();
    for (const auto& s : d.sentences) sentences.push_back({{"index", s.index}, {"text", s.text}});
    return {{"title", d.title}, {"body", d.body}, {"sentences", sentences}};
  }
  json operator()(const FactList& f) const {
    json facts = json::array();
    for (const auto& x : f.facts) {
      facts.push_back({{"fact_id", x.fact_id}, {"text", x.text}, {"source_sentence", x.source_sentence}});
    }
    return {{"facts", facts}};
  }
  json operator()(const QASet& s) const { return {{"pairs", s.pairs}}; }
  json operator()(const ExperimentSpec& s) const {
    json j = {{"experiment_type", s.type == ExperimentType::leave_one_out ? "leave_one_out"
                                                                           : "synthetic_queries"},
              {"prompt", s.prompt},
              {"retrieval", s.retrieval},
              {"target_model", s.target_model},
              {"temperature", s.temperature},
              {"kb_id", s.kb_id}};
    put_optional(j, "questions_id", s.questions_id);
    return j;
  }
  json operator()(const ExperimentOutput& o) const { return {{"responses", o.responses}}; }
  json operator()(const EvaluationSpec& s) const {
    return {{"evaluation_name", s.evaluation_name},
            {"prompt_identifier", s.prompt_identifier},
            {"prompt_content", s.prompt_content},
            {"evaluation_outcomes", s.evaluation_outcomes},
            {"tag_name", s.tag_name},
            {"uses_expected_answer", s.uses_expected_answer}};
  }
  json operator()(const EvaluatedOutput& o) const { return {{"responses", o.responses}}; }
  json operator()(const LabelSession& s) const {
    return {{"label_schema",
             {{"evaluation_spec_id", s.schema.evaluation_spec_id},
              {"evaluation_name", s.schema.evaluation_name},
              {"outcomes", s.schema.outcomes}}},
            {"items", s.items},
            {"annotators", s.annotators},
            {"presentation_order", s.presentation_order},
            {"labels", s.labels},
            {"status", s.status == SessionStatus::open ? "open" : "complete"},
            {"resolutions", s.resolutions},
            {"consensus", s.consensus}};
  }
};

}  // namespace

json payload_to_json(const AnyArtifact& artifact) { return std::visit(PayloadWriter{}, artifact); }

AnyArtifact artifact_from_json(ArtifactHeader header, const json& p) {
  if (!p.is_object()) schema_fail("payload", "must be an object");
  switch (header.kind) {
    case ArtifactKind::source_document: {
      SourceDocument d;
      d.header = std::move(header);
      p.at("title").get_to(d.title);
      p.at("body").get_to(d.body);
      for (const auto& s : p.at("sentences")) {
        d.sentences.push_back({s.at("index").get<int>(), s.at("text").get<std::string>()});
      }
      return d;
    }
    case ArtifactKind::fact_list: {
      FactList f;
      f.header = std::move(header);
      for (const auto& x : p.at("facts")) {
        f.facts.push_back({x.at("fact_id").get<int>(), x.at("text").get<std::string>(),
                           x.at("source_sentence").get<int>()});
      }
      return f;
    }
    case ArtifactKind::qa_set: {
      QASet s;
      s.header = std::move(header);
      p.at("pairs").get_to(s.pairs);
      return s;
    }
    case ArtifactKind::experiment_spec: {
      ExperimentSpec s;
      s.header = std::move(header);
      const auto type = p.at("experiment_type").get<std::string>();
      if (type == "leave_one_out") {
        s.type = ExperimentType::leave_one_out;
      } else if (type == "synthetic_queries") {
        s.type = ExperimentType::synthetic_queries;
      } else {
        schema_fail("experiment_type", "unknown type '" + type + "'");
      }
      p.at("prompt").get_to(s.prompt);
      p.at("retrieval").get_to(s.retrieval);
      p.at("target_model").get_to(s.target_model);
      p.at("temperature").get_to(s.temperature);
      p.at("kb_id").get_to(s.kb_id);
      s.questions_id = optional_field<std::string>(p, "questions_id");
      return s;
    }
    case ArtifactKind::experiment_output: {
      ExperimentOutput o;
      o.header = std::move(header);
      p.at("responses").get_to(o.responses);
      return o;
    }
    case ArtifactKind::evaluation_spec: {
      EvaluationSpec s;
      s.header = std::move(header);
      p.at("evaluation_name").get_to(s.evaluation_name);
      p.at("prompt_identifier").get_to(s.prompt_identifier);
      p.at("prompt_content").get_to(s.prompt_content);
      p.at("evaluation_outcomes").get_to(s.evaluation_outcomes);
      p.at("tag_name").get_to(s.tag_name);
      p.at("uses_expected_answer").get_to(s.uses_expected_answer);
      return s;
    }
    case ArtifactKind::evaluated_output: {
      EvaluatedOutput o;
      o.header = std::move(header);
      p.at("responses").get_to(o.responses);
      return o;
    }
    case ArtifactKind::label_session: {
      LabelSession s;
      s.header = std::move(header);
      const auto& schema = p.at("label_schema");
      schema.at("evaluation_spec_id").get_to(s.schema.evaluation_spec_id);
      schema.at("evaluation_name").get_to(s.schema.evaluation_name);
      schema.at("outcomes").get_to(s.schema.outcomes);
      p.at("items").get_to(s.items);
      p.at("annotators").get_to(s.annotators);
      p.at("presentation_order").get_to(s.presentation_order);
      p.at("labels").get_to(s.labels);
      const auto status = p.at("status").get<std::string>();
      if (status != "open" && status != "complete") schema_fail("status", "must be open or complete");
      s.status = status == "open" ? SessionStatus::open : SessionStatus::complete;
      p.at("resolutions").get_to(s.resolutions);
      p.at("consensus").get_to(s.consensus);
      return s;
    }
  }
  schema_fail("kind", "unhandled kind");
}

}  // namespace ookb
