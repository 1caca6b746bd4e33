#include "ookb/diversity_filter.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "ookb/error.h"
#include "ookb/kb_builder.h"

namespace ookb {

void validate(const FilterConfig& config) {
  auto check = [](double t, const char* name) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::invalid_config, std::string(name) + " must be in [0, 1], got " + format_number(t));
    }
  };
  check(config.keyword_threshold, "keyword_threshold");
  check(config.semantic_threshold, "semantic_threshold");
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

TfidfModel tfidf_model(const std::vector<QAPair>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::precondition, "tf-idf needs at least one pair");
  std::vector<std::map<std::string, int>> counts(pairs.size());
  std::map<std::string, int> df;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (auto& tok : tokenize(pairs[i].question + " " + pairs[i].answer)) ++counts[i][tok];
    for (const auto& [tok, _] : counts[i]) ++df[tok];
  }
  if (df.empty()) throw Error(ErrorCode::empty_vocabulary, "no tokens in any pair");

  TfidfModel model;
  std::map<std::string, std::size_t> index;
  for (const auto& [tok, _] : df) {
    index[tok] = model.vocabulary.size();
    model.vocabulary.push_back(tok);
  }
  const double n = static_cast<double>(pairs.size());
  for (const auto& doc : counts) {
    SparseVector v;
    double norm = 0.0;
    for (const auto& [tok, tf] : doc) {
      const double w = tf * (std::log((1.0 + n) / (1.0 + df[tok])) + 1.0);
      v[index[tok]] = w;
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (auto& [_, w] : v) w /= norm;
    }
    model.vectors.push_back(std::move(v));
  }
  return model;
}

std::vector<SparseVector> tfidf_vectors(const std::vector<QAPair>& pairs) {
  return tfidf_model(pairs).vectors;
}

double sparse_cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [_, w] : a) na += w * w;
  for (const auto& [_, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  for (const auto& [k, w] : small) {
    if (auto it = large.find(k); it != large.end()) dot += w * it->second;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> keyword_uniqueness(const std::vector<QAPair>& pairs) {
  const auto vectors = tfidf_vectors(pairs);
  std::vector<double> uniq(pairs.size(), 1.0);
  if (pairs.size() == 1) return uniq;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (i != j) best = std::max(best, sparse_cosine(vectors[i], vectors[j]));
    }
    uniq[i] = 1.0 - best;
  }
  return uniq;
}

std::vector<std::size_t> keyword_filter(const std::vector<QAPair>& pairs, double threshold) {
  const auto uniq = keyword_uniqueness(pairs);
  const auto [lo, hi] = std::minmax_element(uniq.begin(), uniq.end());
  std::vector<std::size_t> kept;
  // Scores equal up to rounding are treated as ties.
  constexpr double kTolerance = 1e-12;
  if (*hi - *lo <= kTolerance) {
    for (std::size_t i = 0; i < pairs.size(); ++i) kept.push_back(i);
    return kept;
  }
  const double cutoff = *lo + threshold * (*hi - *lo);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (uniq[i] >= cutoff - kTolerance) kept.push_back(i);
  }
  return kept;
}

double cosine_similarity(const Embedding& u, const Embedding& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "vectors of length " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::undefined_similarity, "cosine of a zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

double cosine_distance(const Embedding& u, const Embedding& v) { return 1.0 - cosine_similarity(u, v); }

std::vector<std::size_t> semantic_filter(const std::vector<QAPair>& pairs,
                                         const std::vector<Embedding>& embeddings, double threshold) {
  if (embeddings.size() != pairs.size()) {
    throw Error(ErrorCode::precondition, std::to_string(pairs.size()) + " pairs but " +
                                             std::to_string(embeddings.size()) + " embeddings");
  }
  for (const auto& e : embeddings) {
    if (e.size() != embeddings.front().size()) {
      throw Error(ErrorCode::dimension_mismatch, "embeddings have differing dimensions");
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool distinct = std::all_of(kept.begin(), kept.end(), [&](std::size_t j) {
      return cosine_distance(embeddings[i], embeddings[j]) >= threshold;
    });
    if (distinct) kept.push_back(i);
  }
  return kept;
}

void ensure_embeddings(std::vector<QAPair>& pairs, LlmClient& embedder) {
  std::vector<std::size_t> missing;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].embedding) {
      missing.push_back(i);
      texts.push_back(pair_embedding_text(pairs[i]));
    }
  }
  if (texts.empty()) return;
  auto vectors = embedder.embed(texts);
  for (std::size_t k = 0; k < missing.size(); ++k) pairs[missing[k]].embedding = std::move(vectors[k]);
}

QASet curate(const QASet& input, const FilterConfig& config, LlmClient* embedder, ArtifactContext& ctx,
             std::optional<std::string> artifact_id, CurationCounts* counts) {
  validate(config);
  if (input.pairs.empty()) throw Error(ErrorCode::precondition, "qa_set " + input.header.artifact_id + " is empty");
  if (config.apply_semantic && !embedder) {
    throw Error(ErrorCode::embeddings_required, "semantic filtering needs an embedding client");
  }
  CurationCounts c;
  c.before = input.pairs.size();

  std::vector<QAPair> pairs = input.pairs;
  if (config.apply_keyword) {
    std::vector<QAPair> kept;
    for (auto i : keyword_filter(pairs, config.keyword_threshold)) kept.push_back(pairs[i]);
    pairs = std::move(kept);
  }
  c.after_keyword = pairs.size();

  if (embedder) ensure_embeddings(pairs, *embedder);
  if (config.apply_semantic) {
    std::vector<Embedding> embeddings;
    for (const auto& p : pairs) embeddings.push_back(*p.embedding);
    std::vector<QAPair> kept;
    for (auto i : semantic_filter(pairs, embeddings, config.semantic_threshold)) kept.push_back(pairs[i]);
    pairs = std::move(kept);
  }
  c.after_semantic = pairs.size();

  Metadata metadata;
  for (const auto key : {meta::prompt_identifier, meta::model, meta::domain, meta::ground_truth}) {
    if (auto it = input.header.metadata.find(std::string(key)); it != input.header.metadata.end()) {
      metadata.emplace(it->first, it->second);
    }
  }
  metadata["stage"] = "filtered";
  metadata["keyword_threshold"] = format_number(config.keyword_threshold);
  metadata["semantic_threshold"] = format_number(config.semantic_threshold);
  metadata["apply_keyword"] = config.apply_keyword ? "true" : "false";
  metadata["apply_semantic"] = config.apply_semantic ? "true" : "false";
  metadata["count_before"] = std::to_string(c.before);
  metadata["count_after_keyword"] = std::to_string(c.after_keyword);
  metadata["count_after"] = std::to_string(c.after_semantic);
  if (embedder) metadata["embedding_model"] = embedder->embedding_model();

  QASet out;
  out.pairs = std::move(pairs);
  out.header = ctx.make_header(ArtifactKind::qa_set, {input.header.artifact_id}, std::move(metadata),
                               std::move(artifact_id));
  if (counts) *counts = c;
  return out;
}

}  // namespace ookb
