#include "ookb/experiment.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "ookb/concurrency.h"
#include "ookb/diversity_filter.h"
#include "ookb/error.h"
#include "ookb/parsers.h"
#include "ookb/prompts.h"

namespace ookb {

using nlohmann::json;

PromptSpec default_prompt(PromptName name) {
  switch (name) {
    case PromptName::basic:
      return {name, "basic_v1", std::string(prompts::system_basic()), false};
    case PromptName::conservative:
      return {name, "conservative_v1", std::string(prompts::system_conservative()), true};
    case PromptName::opinion_based:
      return {name, "opinion_based_v1", std::string(prompts::system_opinion_based()), true};
    case PromptName::custom:
      break;
  }
  throw Error(ErrorCode::invalid_config, "custom prompts have no default text");
}

PromptSpec custom_prompt(std::string identifier, std::string text, bool requires_context) {
  if (identifier.empty()) throw Error(ErrorCode::invalid_config, "custom prompt needs an identifier");
  if (trim(text).empty()) throw Error(ErrorCode::invalid_config, "custom prompt text is empty");
  return {PromptName::custom, std::move(identifier), std::move(text), requires_context};
}

std::optional<std::string> validate_config(const PromptSpec& prompt, const RetrievalConfig& retrieval) {
  if (retrieval.k < 1) return "k must be >= 1";
  if (retrieval.hyde_answer_count < 1) return "hyde_answer_count must be >= 1";
  if (prompt.requires_context && retrieval.kind == RetrievalKind::direct) {
    return "prompt '" + prompt.identifier + "' relies on context, which direct retrieval does not provide";
  }
  if (retrieval.kind == RetrievalKind::custom && retrieval.custom_name.empty()) {
    return "custom retrieval needs a name";
  }
  return std::nullopt;
}

std::vector<std::pair<PromptName, RetrievalKind>> valid_combinations() {
  std::vector<std::pair<PromptName, RetrievalKind>> out;
  for (auto p : {PromptName::basic, PromptName::conservative, PromptName::opinion_based}) {
    for (auto r : {RetrievalKind::direct, RetrievalKind::long_in_context, RetrievalKind::basic_rag,
                   RetrievalKind::hyde_rag}) {
      RetrievalConfig cfg;
      cfg.kind = r;
      if (!validate_config(default_prompt(p), cfg)) out.emplace_back(p, r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> top_k_by_cosine(const Embedding& query, const std::vector<Embedding>& candidates,
                                         const std::vector<int>& ids, std::size_t k) {
  if (ids.size() != candidates.size()) throw Error(ErrorCode::precondition, "ids and candidates differ in length");
  std::vector<double> score(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    try {
      score[i] = cosine_similarity(query, candidates[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::undefined_similarity) throw;
      score[i] = 0.0;
    }
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return ids[a] < ids[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

Embedding mean_vector(const std::vector<Embedding>& vectors) {
  if (vectors.empty()) throw Error(ErrorCode::precondition, "mean of no vectors");
  Embedding mean(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != mean.size()) throw Error(ErrorCode::dimension_mismatch, "vectors differ in dimension");
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
  }
  for (auto& x : mean) x /= static_cast<double>(vectors.size());
  return mean;
}

Embedding hyde_query_vector(const std::string& question, LlmClient& generator, LlmClient& embedder, int count) {
  if (count < 1) throw Error(ErrorCode::precondition, "hyde answer count must be >= 1");
  const std::string system = std::string(prompts::hyde_generation()) + prompts::hyde_format(count);
  json j = parse_json_response(generator.chat({system, question}));
  const json* list = &j;
  if (j.is_object() && j.contains("answers")) list = &j.at("answers");
  std::vector<std::string> answers;
  if (list->is_array()) {
    for (const auto& a : *list) {
      if (a.is_string() && !trim(a.get<std::string>()).empty()) answers.push_back(a.get<std::string>());
    }
  }
  if (static_cast<int>(answers.size()) < count) {
    throw Error(ErrorCode::shortfall, "requested " + std::to_string(count) + " hypothetical answers, parsed " +
                                          std::to_string(answers.size()));
  }
  answers.resize(count);
  return mean_vector(embedder.embed(answers));
}

namespace {

class DirectStrategy : public ContextStrategy {
 public:
  std::string name() const override { return "direct"; }
  std::vector<const QAPair*> select(const std::vector<const QAPair*>&, const std::string&) override { return {}; }
};

class LongInContextStrategy : public ContextStrategy {
 public:
  std::string name() const override { return "long_in_context"; }
  std::vector<const QAPair*> select(const std::vector<const QAPair*>& candidates, const std::string&) override {
    auto out = candidates;
    std::sort(out.begin(), out.end(), [](const QAPair* a, const QAPair* b) { return a->pair_id < b->pair_id; });
    return out;
  }
};

class EmbeddingStrategy : public ContextStrategy {
 public:
  EmbeddingStrategy(int k, LlmClient* embedder) : k_(k), embedder_(embedder) {
    if (!embedder_) throw Error(ErrorCode::embeddings_required, "retrieval needs an embedding client");
  }
  bool needs_embeddings() const override { return true; }
  std::vector<const QAPair*> select(const std::vector<const QAPair*>& candidates,
                                    const std::string& question) override {
    if (candidates.empty()) return {};
    const Embedding query = query_vector(question);
    std::vector<Embedding> vectors;
    std::vector<int> ids;
    for (const auto* p : candidates) {
      if (!p->embedding) {
        throw Error(ErrorCode::embeddings_required, "pair " + std::to_string(p->pair_id) + " has no embedding");
      }
      vectors.push_back(*p->embedding);
      ids.push_back(p->pair_id);
    }
    std::vector<const QAPair*> out;
    for (auto i : top_k_by_cosine(query, vectors, ids, static_cast<std::size_t>(k_))) out.push_back(candidates[i]);
    return out;
  }

 protected:
  virtual Embedding query_vector(const std::string& question) { return embedder_->embed({question}).front(); }
  int k_;
  LlmClient* embedder_;
};

class BasicRagStrategy : public EmbeddingStrategy {
 public:
  using EmbeddingStrategy::EmbeddingStrategy;
  std::string name() const override { return "basic_rag"; }
};

class HydeRagStrategy : public EmbeddingStrategy {
 public:
  HydeRagStrategy(int k, int count, LlmClient* embedder, LlmClient* generator)
      : EmbeddingStrategy(k, embedder), count_(count), generator_(generator) {
    if (!generator_) throw Error(ErrorCode::invalid_config, "hyde_rag needs a generator client");
  }
  std::string name() const override { return "hyde_rag"; }

 protected:
  Embedding query_vector(const std::string& question) override {
    return hyde_query_vector(question, *generator_, *embedder_, count_);
  }

 private:
  int count_;
  LlmClient* generator_;
};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, StrategyFactory>& registry() {
  static std::map<std::string, StrategyFactory> r;
  return r;
}

}  // namespace

void register_strategy(const std::string& name, StrategyFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::unique_ptr<ContextStrategy> make_strategy(const RetrievalConfig& config, const RetrievalDeps& deps) {
  switch (config.kind) {
    case RetrievalKind::direct: return std::make_unique<DirectStrategy>();
    case RetrievalKind::long_in_context: return std::make_unique<LongInContextStrategy>();
    case RetrievalKind::basic_rag: return std::make_unique<BasicRagStrategy>(config.k, deps.embedder);
    case RetrievalKind::hyde_rag:
      return std::make_unique<HydeRagStrategy>(config.k, config.hyde_answer_count, deps.embedder,
                                               deps.hyde_generator);
    case RetrievalKind::custom: {
      std::lock_guard lock(registry_mutex());
      auto it = registry().find(config.custom_name);
      if (it == registry().end()) {
        throw Error(ErrorCode::invalid_config, "unknown retrieval strategy '" + config.custom_name + "'");
      }
      return it->second(config, deps);
    }
  }
  throw Error(ErrorCode::invalid_config, "unknown retrieval kind");
}

std::vector<ContextEntry> build_context(const QASet& kb, std::optional<int> held_out_pair_id,
                                        const std::string& question, ContextStrategy& strategy) {
  std::vector<const QAPair*> candidates;
  for (const auto& p : kb.pairs) {
    if (!held_out_pair_id || p.pair_id != *held_out_pair_id) candidates.push_back(&p);
  }
  std::vector<ContextEntry> out;
  for (const auto* p : strategy.select(candidates, question)) {
    if (held_out_pair_id && p->pair_id == *held_out_pair_id) {
      throw Error(ErrorCode::precondition, "strategy returned the held-out pair");
    }
    out.push_back({static_cast<int>(out.size()) + 1, p->pair_id, p->question, p->answer});
  }
  return out;
}

std::string render_context(const std::vector<ContextEntry>& context) {
  std::string out;
  for (const auto& e : context) {
    if (!out.empty()) out += '\n';
    out += std::to_string(e.context_index) + ". Q: " + e.question + " A: " + e.answer;
  }
  return out;
}

std::string render_user_message(const std::string& question, const std::vector<ContextEntry>& context) {
  return "Context:\n" + (context.empty() ? std::string("(no context provided)") : render_context(context)) +
         "\n\nQuestion: " + question;
}

// ---------------------------------------------------------------------------

ExperimentSpec create_experiment(const QASet& kb, const PromptSpec& prompt, const RetrievalConfig& retrieval,
                                 const std::string& target_model, double temperature, ArtifactContext& ctx,
                                 const QASet* questions, std::optional<std::string> artifact_id) {
  if (auto reason = validate_config(prompt, retrieval)) throw Error(ErrorCode::invalid_config, *reason);
  if (kb.pairs.empty()) throw Error(ErrorCode::precondition, "knowledge base is empty");
  if (kb.ground_truth_absent()) {
    throw Error(ErrorCode::precondition, "knowledge base " + kb.header.artifact_id + " has no answers");
  }
  if (retrieval.kind != RetrievalKind::direct && !questions && kb.pairs.size() < 2) {
    throw Error(ErrorCode::precondition, "leave-one-out retrieval needs at least 2 pairs");
  }
  ExperimentSpec spec;
  spec.type = questions ? ExperimentType::synthetic_queries : ExperimentType::leave_one_out;
  spec.prompt = prompt;
  spec.retrieval = retrieval;
  spec.target_model = target_model;
  spec.temperature = temperature;
  spec.kb_id = kb.header.artifact_id;
  std::vector<std::string> upstream = {kb.header.artifact_id};
  if (questions) {
    spec.questions_id = questions->header.artifact_id;
    upstream.push_back(questions->header.artifact_id);
  }
  Metadata metadata = {
      {std::string(meta::prompt_identifier), prompt.identifier},
      {std::string(meta::retrieval_strategy), retrieval.name()},
      {"k", std::to_string(retrieval.k)},
      {std::string(meta::model), target_model},
      {"kb_id", kb.header.artifact_id},
      {"experiment_type", questions ? "synthetic_queries" : "leave_one_out"},
      {"temperature", format_number(temperature)},
  };
  if (retrieval.kind == RetrievalKind::hyde_rag) {
    metadata["hyde_answer_count"] = std::to_string(retrieval.hyde_answer_count);
  }
  spec.header = ctx.make_header(ArtifactKind::experiment_spec, std::move(upstream), std::move(metadata),
                                std::move(artifact_id));
  return spec;
}

ExperimentOutput run_experiment(const ExperimentSpec& spec, const QASet& kb, const QASet* questions,
                                LlmClient& target, const RetrievalDeps& deps, ArtifactContext& ctx,
                                std::optional<std::string> artifact_id) {
  if (auto reason = validate_config(spec.prompt, spec.retrieval)) throw Error(ErrorCode::invalid_config, *reason);
  if (kb.header.artifact_id != spec.kb_id) {
    throw Error(ErrorCode::precondition, "spec expects KB " + spec.kb_id + ", got " + kb.header.artifact_id);
  }
  const bool synthetic = spec.type == ExperimentType::synthetic_queries;
  if (synthetic && (!questions || questions->header.artifact_id != spec.questions_id.value_or(""))) {
    throw Error(ErrorCode::precondition, "synthetic experiment needs its question set " +
                                             spec.questions_id.value_or("(unset)"));
  }
  const QASet& source = synthetic ? *questions : kb;
  auto strategy = make_strategy(spec.retrieval, deps);
  if (strategy->needs_embeddings()) {
    for (const auto& p : kb.pairs) {
      if (!p.embedding) {
        throw Error(ErrorCode::embeddings_required, "KB pair " + std::to_string(p.pair_id) +
                                                        " has no embedding; run the filter stage with an embedder");
      }
    }
  }

  std::vector<SavedResponse> responses(source.pairs.size());
  parallel_for(source.pairs.size(), target.config().max_inflight, [&](std::size_t i) {
    const QAPair& pair = source.pairs[i];
    SavedResponse& r = responses[i];
    r.question_id = pair.pair_id;
    r.question = pair.question;
    r.expected_answer = pair.answer;
    r.prompt_identifier = spec.prompt.identifier;
    r.model = target.model();
    try {
      r.context_snapshot =
          build_context(kb, synthetic ? std::nullopt : std::optional<int>(pair.pair_id), pair.question, *strategy);
      r.raw_text = target.chat({spec.prompt.text, render_user_message(pair.question, r.context_snapshot),
                                spec.temperature});
      try {
        auto cited = parse_citation(r.raw_text);
        if (cited && (*cited < 1 || *cited > static_cast<int>(r.context_snapshot.size()))) {
          r.citation_error = "cited index " + std::to_string(*cited) + " is outside a context of " +
                             std::to_string(r.context_snapshot.size());
        } else {
          r.cited_context_index = cited;
        }
      } catch (const Error& e) {
        r.citation_error = e.what();
      }
    } catch (const Error& e) {
      r.status = ResponseStatus::error;
      r.error = e.what();
    }
    r.timestamp = ctx.now();
  });
  std::sort(responses.begin(), responses.end(),
            [](const SavedResponse& a, const SavedResponse& b) { return a.question_id < b.question_id; });

  ExperimentOutput out;
  out.responses = std::move(responses);
  Metadata metadata = spec.header.metadata;
  metadata[std::string(meta::model)] = target.model();
  metadata["experiment_spec_id"] = spec.header.artifact_id;
  metadata["failure_count"] = std::to_string(failure_count(out));
  if (auto it = kb.header.metadata.find(std::string(meta::domain)); it != kb.header.metadata.end()) {
    metadata[it->first] = it->second;
  }
  if (synthetic) metadata[std::string(meta::ground_truth)] = "absent";
  std::vector<std::string> upstream = {source.header.artifact_id, spec.header.artifact_id};
  if (synthetic) upstream.push_back(kb.header.artifact_id);
  out.header = ctx.make_header(ArtifactKind::experiment_output, std::move(upstream), std::move(metadata),
                               std::move(artifact_id));
  return out;
}

std::size_t failure_count(const ExperimentOutput& output) {
  return static_cast<std::size_t>(std::count_if(output.responses.begin(), output.responses.end(),
                                                [](const SavedResponse& r) { return r.status == ResponseStatus::error; }));
}

void enforce_failure_budget(const ExperimentOutput& output) {
  const auto failed = failure_count(output);
  if (output.responses.empty()) return;
  const double rate = static_cast<double>(failed) / static_cast<double>(output.responses.size());
  if (rate > kMaxFailureRate) {
    std::string first;
    for (const auto& r : output.responses) {
      if (r.status == ResponseStatus::error) {
        first = r.error;
        break;
      }
    }
    throw Error(ErrorCode::run_failure, std::to_string(failed) + " of " + std::to_string(output.responses.size()) +
                                            " questions failed (first: " + first + ")");
  }
}

}  // namespace ookb
