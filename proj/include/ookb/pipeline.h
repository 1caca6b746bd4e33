// End-to-end orchestration: document -> facts -> QA set -> filtered KB ->
// experiment -> evaluation -> report, with resumable, content-derived ids.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ookb/artifact_store.h"
#include "ookb/diversity_filter.h"
#include "ookb/gateway.h"
#include "ookb/types.h"

namespace ookb {

struct PipelineDefaults {
  PromptName prompt = PromptName::basic;
  RetrievalKind strategy = RetrievalKind::basic_rag;
  int k = 5;
  int hyde_answer_count = 3;
  double temperature = 0.0;
  int fact_batch_size = 10;
  FilterConfig filter;
  std::vector<std::string> evaluations = {"AbstentionCheck", "FactualityCheck"};
  std::string domain;
};

struct PipelineConfig {
  std::filesystem::path store_root = "ookb-store";
  std::map<std::string, ClientConfig> clients;
  // Role -> client name. Roles: generator, target, judge, embedder, hyde.
  std::map<std::string, std::string> roles;
  PipelineDefaults defaults;
  std::uint64_t seed = 0;
  std::optional<std::string> fixed_clock;  // RFC 3339, for reproducible timestamps
};

inline constexpr const char* kRoles[] = {"generator", "target", "judge", "embedder", "hyde"};

/// Parses the JSON config; relative store_root is resolved against `base_dir`.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const PipelineConfig& config);
/// Every role names an existing client; defaults are usable.
void validate(const PipelineConfig& config);

/// Client for a role; `override_name` replaces the configured one.
const ClientConfig& client_for_role(const PipelineConfig& config, const std::string& role,
                                    const std::string& override_name = "");

struct PipelineChoices {
  std::optional<PromptName> prompt;
  std::optional<RetrievalKind> strategy;
  std::optional<std::vector<std::string>> evaluations;
  std::string title;
};

using ClientFactory = std::function<std::shared_ptr<LlmClient>(const std::string& role, const ClientConfig&)>;

struct StageRecord {
  std::string stage;
  std::string artifact_id;
  bool executed = false;
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  std::string evaluated_output_id;
  std::filesystem::path report_json;
  std::filesystem::path report_text;

  std::vector<std::string> executed() const;
  std::vector<std::string> skipped() const;
};

/// Runs every stage, skipping those whose artifact already exists. Stage
/// errors are rethrown with the stage name and the last persisted id.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& source_path,
                            const PipelineChoices& choices, const ClientFactory& factory = nullptr);

/// Deterministic id for a stage output.
std::string derive_id(std::uint64_t seed, const std::string& stage, const std::vector<std::string>& upstream,
                      const std::string& config_hash);
std::string config_hash(const nlohmann::json& settings);

ArtifactContext make_context(const PipelineConfig& config);

/// Metrics report for evaluated outputs, written as <dir>/<name>.json and .txt.
std::pair<std::filesystem::path, std::filesystem::path> write_report(
    const std::vector<EvaluatedOutput>& outputs, const ArtifactStore& store, const std::filesystem::path& dir,
    const std::string& name);

}  // namespace ookb
