#include "ookb/kb_builder.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "ookb/concurrency.h"
#include "ookb/error.h"
#include "ookb/parsers.h"
#include "ookb/prompts.h"

namespace ookb {

using nlohmann::json;

namespace {

const std::set<std::string>& abbreviation_set() {
  static const std::set<std::string> set = [] {
    std::set<std::string> out;
    std::istringstream in{std::string(prompts::abbreviations())};
    std::string line;
    while (std::getline(in, line)) {
      line = trim(line);
      if (!line.empty() && line.front() != '#') out.insert(to_lower(line));
    }
    return out;
  }();
  return set;
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

// The whitespace-delimited word ending just before position `dot`.
std::string word_before(std::string_view body, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0 && !std::isspace(static_cast<unsigned char>(body[start - 1]))) --start;
  std::string word(body.substr(start, dot - start));
  while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'')) {
    word.erase(word.begin());
  }
  return to_lower(word);
}

bool starts_sentence(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isupper(u) || std::isdigit(u) || c == '"' || c == '\'' || c == '(';
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view body) {
  std::vector<Sentence> out;
  auto emit = [&](std::size_t from, std::size_t to) {
    std::string text = trim(body.substr(from, to - from));
    if (!text.empty()) out.push_back({static_cast<int>(out.size()) + 1, std::move(text)});
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < body.size()) {
    if (!is_terminal(body[i])) {
      ++i;
      continue;
    }
    const std::size_t punct = i;
    std::size_t end = i + 1;
    while (end < body.size() && (is_terminal(body[end]) || is_closer(body[end]))) ++end;
    std::size_t next = end;
    while (next < body.size() && std::isspace(static_cast<unsigned char>(body[next]))) ++next;

    const bool at_end = next == body.size();
    const bool boundary = at_end || (next > end && starts_sentence(body[next]));
    const bool abbreviation = body[punct] == '.' && end == punct + 1 &&
                              abbreviation_set().count(word_before(body, punct)) > 0;
    if (boundary && !abbreviation) {
      emit(start, end);
      start = next;
    }
    i = end;
  }
  if (start < body.size()) emit(start, body.size());
  return out;
}

SourceDocument make_source_document(std::string title, std::string body, ArtifactContext& ctx,
                                    Metadata metadata, std::optional<std::string> artifact_id) {
  SourceDocument doc;
  doc.sentences = segment_sentences(body);
  doc.title = std::move(title);
  doc.body = std::move(body);
  doc.header = ctx.make_header(ArtifactKind::source_document, {}, std::move(metadata), std::move(artifact_id));
  return doc;
}

// ---------------------------------------------------------------------------

std::string FactExtractionConfig::effective_prompt() const {
  return (prompt_text.empty() ? std::string(prompts::fact_extraction()) : prompt_text) +
         prompts::fact_extraction_format();
}

std::string render_fact_batch(const std::vector<Sentence>& batch) {
  std::string out;
  for (const auto& s : batch) {
    if (!out.empty()) out += '\n';
    out += std::to_string(s.index) + ". " + s.text;
  }
  return out;
}

namespace {

struct RawFact {
  std::string text;
  std::optional<int> source;
};

std::optional<int> source_index(const json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number()) return static_cast<int>(v.get<double>());
  if (v.is_string()) {
    const auto s = trim(v.get<std::string>());
    std::size_t pos = 0;
    while (pos < s.size() && !std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == s.size()) return std::nullopt;
    return std::stoi(s.substr(pos));
  }
  // Several sources cited: the first one is authoritative.
  if (v.is_array() && !v.empty()) return source_index(v.front());
  return std::nullopt;
}

std::vector<RawFact> parse_facts(const std::string& response) {
  json j = parse_json_response(response);
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("facts")) throw Error(ErrorCode::generation_parse, "fact response lacks a \"facts\" array");
    list = &j.at("facts");
  }
  if (!list->is_array()) throw Error(ErrorCode::generation_parse, "\"facts\" is not an array");
  std::vector<RawFact> out;
  for (const auto& item : *list) {
    RawFact f;
    if (item.is_object()) {
      const char* key = item.contains("fact") ? "fact" : "text";
      if (!item.contains(key) || !item.at(key).is_string()) {
        throw Error(ErrorCode::generation_parse, "fact entry without text: " + item.dump());
      }
      f.text = trim(item.at(key).get<std::string>());
      for (const char* k : {"source", "source_sentence", "sentence"}) {
        if (item.contains(k)) {
          f.source = source_index(item.at(k));
          break;
        }
      }
    } else if (item.is_string()) {
      f.text = trim(item.get<std::string>());
    } else {
      throw Error(ErrorCode::generation_parse, "unexpected fact entry: " + item.dump());
    }
    if (!f.text.empty()) out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

FactList extract_facts(const SourceDocument& document, const FactExtractionConfig& config,
                       LlmClient& client, ArtifactContext& ctx,
                       std::optional<std::string> artifact_id) {
  if (config.batch_size < 1) throw Error(ErrorCode::precondition, "batch_size must be >= 1");
  if (document.sentences.empty()) {
    throw Error(ErrorCode::precondition, "document " + document.header.artifact_id + " has no sentences");
  }
  std::vector<std::vector<Sentence>> batches;
  for (std::size_t i = 0; i < document.sentences.size(); i += config.batch_size) {
    const auto end = std::min(document.sentences.size(), i + static_cast<std::size_t>(config.batch_size));
    batches.emplace_back(document.sentences.begin() + i, document.sentences.begin() + end);
  }
  const std::string system = config.effective_prompt();
  std::vector<std::vector<RawFact>> per_batch(batches.size());
  parallel_for(batches.size(), client.config().max_inflight, [&](std::size_t b) {
    per_batch[b] = parse_facts(client.chat({system, render_fact_batch(batches[b])}));
  });

  FactList list;
  std::vector<std::string> offending;
  const int sentence_count = static_cast<int>(document.sentences.size());
  for (const auto& batch : per_batch) {
    for (const auto& raw : batch) {
      const int fact_id = static_cast<int>(list.facts.size()) + 1;
      if (!raw.source || *raw.source < 1 || *raw.source > sentence_count) {
        offending.push_back("fact " + std::to_string(fact_id) + " (\"" + raw.text + "\") cites " +
                            (raw.source ? "sentence " + std::to_string(*raw.source) : "no sentence"));
      }
      list.facts.push_back({fact_id, raw.text, raw.source.value_or(0)});
    }
  }
  if (!offending.empty()) {
    std::string msg;
    for (const auto& o : offending) msg += (msg.empty() ? "" : "; ") + o;
    throw Error(ErrorCode::grounding, msg);
  }
  if (list.facts.empty()) {
    throw Error(ErrorCode::empty_extraction, "no facts extracted from document " + document.header.artifact_id);
  }
  Metadata metadata = {{std::string(meta::prompt_identifier), config.prompt_identifier},
                       {std::string(meta::model), client.model()},
                       {"batch_size", std::to_string(config.batch_size)}};
  if (auto it = document.header.metadata.find(std::string(meta::domain)); it != document.header.metadata.end()) {
    metadata.emplace(it->first, it->second);
  }
  list.header = ctx.make_header(ArtifactKind::fact_list, {document.header.artifact_id}, std::move(metadata),
                                std::move(artifact_id));
  return list;
}

// ---------------------------------------------------------------------------

std::string QAGenConfig::effective_prompt() const {
  return (prompt_text.empty() ? std::string(prompts::qa_generation()) : prompt_text) +
         prompts::qa_generation_format();
}

QAPair generate_qa(const AtomicFact& fact, const QAGenConfig& config, LlmClient& client) {
  if (fact.text.empty()) throw Error(ErrorCode::precondition, "fact " + std::to_string(fact.fact_id) + " is empty");
  const std::string response = client.chat({config.effective_prompt(), fact.text});
  json j = parse_json_response(response);
  if (!j.is_object() || !j.contains("question") || !j.contains("answer") || !j["question"].is_string() ||
      !j["answer"].is_string()) {
    throw Error(ErrorCode::generation_parse,
                "expected {\"question\", \"answer\"} for fact " + std::to_string(fact.fact_id));
  }
  QAPair pair;
  pair.pair_id = fact.fact_id;
  pair.source_fact_id = fact.fact_id;
  pair.question = trim(j["question"].get<std::string>());
  pair.answer = trim(j["answer"].get<std::string>());
  if (pair.question.empty() || pair.answer.empty()) {
    throw Error(ErrorCode::empty_field, std::string(pair.question.empty() ? "question" : "answer") +
                                            " is empty for fact " + std::to_string(fact.fact_id));
  }
  return pair;
}

QASet generate_qa_set(const FactList& facts, const QAGenConfig& config, LlmClient& client,
                      ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  if (config.effective_prompt().empty()) throw Error(ErrorCode::precondition, "QA prompt is empty");
  QASet set;
  set.pairs.resize(facts.facts.size());
  parallel_for(facts.facts.size(), client.config().max_inflight,
               [&](std::size_t i) { set.pairs[i] = generate_qa(facts.facts[i], config, client); });
  std::sort(set.pairs.begin(), set.pairs.end(),
            [](const QAPair& a, const QAPair& b) { return a.pair_id < b.pair_id; });
  Metadata metadata = {{std::string(meta::prompt_identifier), config.prompt_identifier},
                       {std::string(meta::model), client.model()},
                       {"stage", "generated"}};
  if (auto it = facts.header.metadata.find(std::string(meta::domain)); it != facts.header.metadata.end()) {
    metadata.emplace(it->first, it->second);
  }
  set.header = ctx.make_header(ArtifactKind::qa_set, {facts.header.artifact_id}, std::move(metadata),
                               std::move(artifact_id));
  return set;
}

// ---------------------------------------------------------------------------

std::string render_synthetic_request(std::string_view topic, int n) {
  return "Topic: " + std::string(topic) + "\nNumber of questions: " + std::to_string(n);
}

std::vector<std::string> generate_synthetic_queries(std::string_view topic, int n, LlmClient& client) {
  if (n < 1) throw Error(ErrorCode::precondition, "n must be >= 1");
  if (trim(topic).empty()) throw Error(ErrorCode::precondition, "topic must not be empty");
  json j = parse_json_response(client.chat({prompts::synthetic_query_system(n), render_synthetic_request(topic, n)}));
  const json* list = &j;
  if (j.is_object() && j.contains("questions")) list = &j.at("questions");
  std::vector<std::string> out;
  if (list->is_array()) {
    for (const auto& q : *list) {
      if (!q.is_string()) continue;
      auto text = trim(q.get<std::string>());
      if (!text.empty()) out.push_back(std::move(text));
      if (static_cast<int>(out.size()) == n) break;
    }
  }
  if (static_cast<int>(out.size()) < n) {
    throw Error(ErrorCode::shortfall, "requested " + std::to_string(n) + " questions, parsed " +
                                          std::to_string(out.size()));
  }
  return out;
}

QASet make_synthetic_query_set(const std::vector<std::string>& questions,
                               const SourceDocument& topic_document, const std::string& model,
                               ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  QASet set;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    set.pairs.push_back({static_cast<int>(i) + 1, questions[i], "", std::nullopt, std::nullopt});
  }
  set.header = ctx.make_header(ArtifactKind::qa_set, {topic_document.header.artifact_id},
                               {{std::string(meta::ground_truth), "absent"},
                                {std::string(meta::model), model},
                                {std::string(meta::prompt_identifier), "synthetic_queries_v1"},
                                {"stage", "synthetic"}},
                               std::move(artifact_id));
  return set;
}

// ---------------------------------------------------------------------------

std::vector<FaqEntry> read_faq_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::vector<FaqEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      FaqEntry e{trim(j.at("question").get<std::string>()), trim(j.at("answer").get<std::string>())};
      if (e.question.empty() || e.answer.empty()) {
        throw Error(ErrorCode::empty_field, path.string() + ":" + std::to_string(line_no) + ": empty question or answer");
      }
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

FaqIngest ingest_faq(const std::vector<FaqEntry>& entries, std::string title, ArtifactContext& ctx,
                     Metadata document_metadata) {
  if (entries.empty()) throw Error(ErrorCode::empty_extraction, "FAQ file has no entries");
  FaqIngest out;
  auto& doc = out.document;
  doc.title = std::move(title);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    const std::string line = entries[i].question + " " + entries[i].answer;
    if (!doc.body.empty()) doc.body += '\n';
    doc.body += line;
    doc.sentences.push_back({index, line});
    out.facts.facts.push_back({index, line, index});
    out.qa_set.pairs.push_back({index, entries[i].question, entries[i].answer, index, std::nullopt});
  }
  Metadata derived;
  if (auto it = document_metadata.find(std::string(meta::domain)); it != document_metadata.end()) {
    derived.emplace(it->first, it->second);
  }
  doc.header = ctx.make_header(ArtifactKind::source_document, {}, std::move(document_metadata));
  Metadata fact_meta = derived;
  fact_meta[std::string(meta::prompt_identifier)] = "direct_faq";
  fact_meta[std::string(meta::model)] = "none";
  out.facts.header = ctx.make_header(ArtifactKind::fact_list, {doc.header.artifact_id}, fact_meta);
  Metadata qa_meta = derived;
  qa_meta[std::string(meta::prompt_identifier)] = "direct_faq";
  qa_meta["stage"] = "generated";
  out.qa_set.header = ctx.make_header(ArtifactKind::qa_set, {out.facts.header.artifact_id}, qa_meta);
  return out;
}

std::string pair_embedding_text(const QAPair& pair) {
  return "Q: " + pair.question + "\nA: " + pair.answer;
}

}  // namespace ookb
