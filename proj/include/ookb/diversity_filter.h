// Keyword (TF-IDF) and semantic (embedding) filtering of generated QA pairs.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ookb/artifact_store.h"
#include "ookb/gateway.h"
#include "ookb/types.h"

namespace ookb {

struct FilterConfig {
  double keyword_threshold = 0.3;
  double semantic_threshold = 0.3;
  bool apply_keyword = true;
  bool apply_semantic = true;
};

void validate(const FilterConfig& config);

/// Sparse vector keyed by vocabulary index.
using SparseVector = std::map<std::size_t, double>;

struct TfidfModel {
  std::vector<std::string> vocabulary;  // sorted
  std::vector<SparseVector> vectors;    // L2-normalized, one per pair
};

/// Document text is question + " " + answer. tf is the raw count and
/// idf = ln((1 + N) / (1 + df)) + 1.
TfidfModel tfidf_model(const std::vector<QAPair>& pairs);
std::vector<SparseVector> tfidf_vectors(const std::vector<QAPair>& pairs);

/// Cosine of two sparse vectors; 0 when either is empty.
double sparse_cosine(const SparseVector& a, const SparseVector& b);

/// 1 - max cosine to any other pair; a lone pair scores 1.
std::vector<double> keyword_uniqueness(const std::vector<QAPair>& pairs);

/// Indices (ascending) of pairs whose uniqueness is at least
/// min + threshold * (max - min). Everything is kept when max == min.
std::vector<std::size_t> keyword_filter(const std::vector<QAPair>& pairs, double threshold);

/// Greedy selection in input order: a pair is kept when its cosine distance
/// to every already kept pair is at least `threshold`.
std::vector<std::size_t> semantic_filter(const std::vector<QAPair>& pairs,
                                         const std::vector<Embedding>& embeddings, double threshold);

/// 1 - cosine similarity. Throws undefined_similarity for a zero vector and
/// dimension_mismatch for unequal lengths.
double cosine_distance(const Embedding& u, const Embedding& v);
double cosine_similarity(const Embedding& u, const Embedding& v);

struct CurationCounts {
  std::size_t before = 0;
  std::size_t after_keyword = 0;
  std::size_t after_semantic = 0;
};

/// Runs the enabled filters (keyword first) and returns the retained pairs
/// as a new qa_set. When an embedder is given, retained pairs carry their
/// embeddings so later retrieval can reuse them.
QASet curate(const QASet& input, const FilterConfig& config, LlmClient* embedder,
             ArtifactContext& ctx, std::optional<std::string> artifact_id = std::nullopt,
             CurationCounts* counts = nullptr);

/// Embeds every pair lacking an embedding (pair_embedding_text) in one batch.
void ensure_embeddings(std::vector<QAPair>& pairs, LlmClient& embedder);

/// Fixed-precision decimal used when thresholds are written to metadata.
std::string format_number(double value);

}  // namespace ookb
