// Leave-one-out experiments: context construction, the target-model run and
// the saved responses.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ookb/artifact_store.h"
#include "ookb/gateway.h"
#include "ookb/types.h"

namespace ookb {

/// Built-in system prompt; conservative and opinion_based require context.
PromptSpec default_prompt(PromptName name);
PromptSpec custom_prompt(std::string identifier, std::string text, bool requires_context);

/// nullopt when the combination is usable, otherwise the reason.
std::optional<std::string> validate_config(const PromptSpec& prompt, const RetrievalConfig& retrieval);

/// Every usable (built-in prompt, built-in strategy) pair.
std::vector<std::pair<PromptName, RetrievalKind>> valid_combinations();

/// Clients a strategy may need. Either may be null when unused.
struct RetrievalDeps {
  LlmClient* embedder = nullptr;
  LlmClient* hyde_generator = nullptr;
};

/// Chooses context pairs for one question. `candidates` already excludes the
/// held-out pair; implementations return a subset in presentation order.
class ContextStrategy {
 public:
  virtual ~ContextStrategy() = default;
  virtual std::string name() const = 0;
  virtual bool needs_embeddings() const { return false; }
  virtual std::vector<const QAPair*> select(const std::vector<const QAPair*>& candidates,
                                            const std::string& question) = 0;
};

using StrategyFactory =
    std::function<std::unique_ptr<ContextStrategy>(const RetrievalConfig&, const RetrievalDeps&)>;

/// Makes a custom strategy available under RetrievalKind::custom with
/// RetrievalConfig::custom_name == name.
void register_strategy(const std::string& name, StrategyFactory factory);
std::unique_ptr<ContextStrategy> make_strategy(const RetrievalConfig& config, const RetrievalDeps& deps);

/// Indices of the k candidates most cosine-similar to `query`, best first;
/// ties go to the lower id. A zero vector scores similarity 0.
std::vector<std::size_t> top_k_by_cosine(const Embedding& query, const std::vector<Embedding>& candidates,
                                         const std::vector<int>& ids, std::size_t k);

/// Parses `count` hypothetical answers from the generator, embeds each and
/// returns their component-wise mean (not re-normalized).
Embedding hyde_query_vector(const std::string& question, LlmClient& generator, LlmClient& embedder,
                            int count = 3);
Embedding mean_vector(const std::vector<Embedding>& vectors);

/// Numbered context for a question. With a held-out id, that pair never
/// reaches the strategy.
std::vector<ContextEntry> build_context(const QASet& kb, std::optional<int> held_out_pair_id,
                                        const std::string& question, ContextStrategy& strategy);

std::string render_context(const std::vector<ContextEntry>& context);
std::string render_user_message(const std::string& question, const std::vector<ContextEntry>& context);

ExperimentSpec create_experiment(const QASet& kb, const PromptSpec& prompt, const RetrievalConfig& retrieval,
                                 const std::string& target_model, double temperature, ArtifactContext& ctx,
                                 const QASet* questions = nullptr,
                                 std::optional<std::string> artifact_id = std::nullopt);

/// Fraction of failed questions above which a run counts as failed.
inline constexpr double kMaxFailureRate = 0.10;

/// Runs every question (the KB itself for leave-one-out, `questions` for
/// synthetic query experiments). Per-question failures are recorded with
/// status error; call enforce_failure_budget to turn a bad run into an error.
ExperimentOutput run_experiment(const ExperimentSpec& spec, const QASet& kb, const QASet* questions,
                                LlmClient& target, const RetrievalDeps& deps, ArtifactContext& ctx,
                                std::optional<std::string> artifact_id = std::nullopt);

std::size_t failure_count(const ExperimentOutput& output);
/// Throws run_failure when more than kMaxFailureRate of responses failed.
void enforce_failure_budget(const ExperimentOutput& output);

}  // namespace ookb
