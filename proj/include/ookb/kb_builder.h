// Source text -> sentences -> atomic facts -> grounded QA pairs.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ookb/artifact_store.h"
#include "ookb/gateway.h"
#include "ookb/types.h"

namespace ookb {

/// Rule-based segmentation: a sentence ends at '.', '!' or '?' (plus any
/// closing quotes/brackets) followed by whitespace and an uppercase letter or
/// digit, or at end of text. Periods after stop-listed abbreviations do not end
/// a sentence. Indices are 1-based.
std::vector<Sentence> segment_sentences(std::string_view body);

SourceDocument make_source_document(std::string title, std::string body, ArtifactContext& ctx,
                                    Metadata metadata = {},
                                    std::optional<std::string> artifact_id = std::nullopt);

struct FactExtractionConfig {
  std::string prompt_identifier = "fact_extraction_v1";
  std::string prompt_text;  // empty -> default
  int batch_size = 10;

  std::string effective_prompt() const;
};

/// Numbered sentence block sent as the user message for one batch.
std::string render_fact_batch(const std::vector<Sentence>& batch);

FactList extract_facts(const SourceDocument& document, const FactExtractionConfig& config,
                       LlmClient& client, ArtifactContext& ctx,
                       std::optional<std::string> artifact_id = std::nullopt);

struct QAGenConfig {
  std::string prompt_identifier = "qa_generation_v1";
  std::string prompt_text;  // empty -> default

  std::string effective_prompt() const;
};

/// One QA pair for one fact; pair_id == source_fact_id == fact.fact_id.
QAPair generate_qa(const AtomicFact& fact, const QAGenConfig& config, LlmClient& client);

/// Runs generate_qa over every fact (concurrently, bounded by the client);
/// output ordered by fact_id.
QASet generate_qa_set(const FactList& facts, const QAGenConfig& config, LlmClient& client,
                      ArtifactContext& ctx, std::optional<std::string> artifact_id = std::nullopt);

std::string render_synthetic_request(std::string_view topic, int n);

/// `n` topic questions without answers. Extra questions are dropped.
std::vector<std::string> generate_synthetic_queries(std::string_view topic, int n, LlmClient& client);

/// Wraps synthetic questions as a qa_set marked ground_truth=absent. The
/// topic is recorded as its own source document so lineage still terminates
/// at a source.
QASet make_synthetic_query_set(const std::vector<std::string>& questions,
                               const SourceDocument& topic_document, const std::string& model,
                               ArtifactContext& ctx,
                               std::optional<std::string> artifact_id = std::nullopt);

struct FaqEntry {
  std::string question;
  std::string answer;
};

/// JSON-lines FAQ file: one {"question": ..., "answer": ...} object per line.
std::vector<FaqEntry> read_faq_jsonl(const std::filesystem::path& path);

struct FaqIngest {
  SourceDocument document;
  FactList facts;
  QASet qa_set;
};

/// Direct FAQ extraction: each entry becomes one sentence, one fact and one
/// QA pair, bypassing the LLM.
FaqIngest ingest_faq(const std::vector<FaqEntry>& entries, std::string title, ArtifactContext& ctx,
                     Metadata document_metadata = {});

/// Text used to embed a pair for retrieval and semantic filtering.
std::string pair_embedding_text(const QAPair& pair);

}  // namespace ookb
