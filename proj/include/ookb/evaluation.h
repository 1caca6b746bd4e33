// Judge-model evaluation of experiment outputs, rate metrics and judge
// validation against human labels.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ookb/artifact_store.h"
#include "ookb/gateway.h"
#include "ookb/types.h"

namespace ookb {

inline constexpr std::string_view kAbstentionCheck = "AbstentionCheck";
inline constexpr std::string_view kFactualityCheck = "FactualityCheck";
inline constexpr std::string_view kAbstained = "Yes";

EvaluationSpec create_evaluation_spec(std::string evaluation_name, std::string prompt_identifier,
                                      std::string prompt_content, std::vector<std::string> outcomes,
                                      std::string tag_name, bool uses_expected_answer, ArtifactContext& ctx,
                                      std::optional<std::string> artifact_id = std::nullopt);

/// Yes/No/Uncertain in <abstention> tags; does not see the expected answer.
EvaluationSpec default_abstention_spec(ArtifactContext& ctx, std::optional<std::string> artifact_id = std::nullopt);
/// tier_1/tier_2/tier_3 in <factuality> tags; compares with the expected answer.
EvaluationSpec default_factuality_spec(ArtifactContext& ctx, std::optional<std::string> artifact_id = std::nullopt);

std::string judge_system_prompt(const EvaluationSpec& spec);
std::string render_judge_message(const EvaluationSpec& spec, const std::string& question,
                                 const std::string& model_answer, const std::string& expected_answer);

/// Fraction of unparseable judgments above which a run counts as failed.
inline constexpr double kMaxUnparseableRate = 0.10;

/// Judges every successful response with every spec. AbstentionCheck runs
/// first; when it says Yes the remaining specs are skipped for that response.
/// Unparseable judge replies are stored as kUnparseable with the raw text.
EvaluatedOutput evaluate_responses(const ExperimentOutput& output, const std::vector<EvaluationSpec>& specs,
                                   LlmClient& judge, ArtifactContext& ctx,
                                   std::optional<std::string> artifact_id = std::nullopt);

std::size_t unparseable_count(const EvaluatedOutput& evaluated);
/// Throws unparseable_judgments when more than kMaxUnparseableRate of the
/// recorded judgments are unparseable.
void enforce_parse_budget(const EvaluatedOutput& evaluated);

/// 100 * Yes / all. Throws precondition on empty input.
double abstention_rate(const std::vector<std::string>& abstention_outcomes);
/// 100 * (tier_1 + tier_2) / non-abstained; nullopt when nothing was answered.
/// `factuality_outcomes[i]` is ignored for abstained responses.
std::optional<double> factuality_rate(const std::vector<std::string>& abstention_outcomes,
                                      const std::vector<std::optional<std::string>>& factuality_outcomes);

double compute_abstention_rate(const EvaluatedOutput& evaluated);
std::optional<double> compute_factuality_rate(const EvaluatedOutput& evaluated);

struct RateSummary {
  std::size_t evaluated = 0;
  std::size_t abstained = 0;
  std::size_t non_abstained = 0;
  std::size_t factual = 0;
  std::optional<double> abstention_rate;
  std::optional<double> factuality_rate;
  std::map<std::string, std::size_t> abstention_counts;
  std::map<std::string, std::size_t> factuality_counts;
};

struct MetricsRow {
  std::string evaluated_output_id;
  std::string prompt;
  std::string strategy;
  std::string domain;
  std::string target_model;
  RateSummary rates;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;  // sorted by prompt, strategy, domain
  RateSummary overall;
};

RateSummary summarize(const std::vector<EvaluatedResponse>& responses);
MetricsReport build_report(const std::vector<EvaluatedOutput>& outputs);
nlohmann::json to_json(const MetricsReport& report);
std::string render_table(const MetricsReport& report);

struct ConfusionReport {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> kappa;
};

/// Binary metrics with `positive` as the positive class; other labels count
/// as negative. Throws length_mismatch.
ConfusionReport validate_evaluator(const std::vector<std::string>& automatic, const std::vector<std::string>& human,
                                   const std::string& positive);
ConfusionReport confusion_from_counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn);
/// 2PR / (P + R); nullopt when P + R == 0.
std::optional<double> f1_score(double precision, double recall);
nlohmann::json to_json(const ConfusionReport& report);

enum class Normalize { by_a, by_b };

struct CrossTab {
  std::vector<std::string> rows;     // labels_a values in first-appearance order
  std::vector<std::string> columns;  // labels_b values in first-appearance order
  std::map<std::string, std::map<std::string, double>> percent;  // nonzero cells only
  std::map<std::string, std::map<std::string, std::size_t>> counts;
};

CrossTab cross_tabulate(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b,
                        Normalize normalize);
nlohmann::json to_json(const CrossTab& table);

}  // namespace ookb
