// Human labeling: stratified sampling, multi-annotator sessions, agreement
// and consensus.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ookb/artifact_store.h"
#include "ookb/types.h"

namespace ookb {

/// Items drawn from evaluated outputs. A dimension is an output metadata key
/// ("prompt" and "strategy" are accepted for prompt_identifier and
/// retrieval_strategy) or the name of an evaluation whose outcome is used.
/// Each stratum contributes min(n_per_stratum, size) items chosen under
/// `seed`. `auto_label_from` names the evaluation copied into auto_label.
std::vector<LabelItem> stratified_sample(const std::vector<EvaluatedOutput>& outputs,
                                         const std::vector<std::string>& dimensions, int n_per_stratum,
                                         std::uint64_t seed, const std::string& auto_label_from = "");

LabelSession create_session(std::vector<LabelItem> items, const EvaluationSpec& schema,
                            std::vector<std::string> annotators, std::uint64_t seed, ArtifactContext& ctx,
                            std::optional<std::string> artifact_id = std::nullopt);

/// Stores one label; returns the canonical outcome spelling. Errors:
/// already_labeled, schema (outcome outside the schema), precondition
/// (unknown annotator or item).
std::string record_label(LabelSession& session, const std::string& annotator, const std::string& item_id,
                         const std::string& outcome);

const LabelItem* next_item(const LabelSession& session, const std::string& annotator);
std::size_t labeled_count(const LabelSession& session, const std::string& annotator);

/// Items every annotator has labeled, in item order.
std::vector<std::string> fully_labeled_items(const LabelSession& session);
/// Fully labeled items on which two annotators differ, in item order.
std::vector<std::string> disagreements(const LabelSession& session);
nlohmann::json disagreement_details(const LabelSession& session);

struct AgreementStats {
  std::size_t items_compared = 0;
  std::optional<double> cohen_kappa;    // exactly two annotators
  std::optional<double> fleiss_kappa;   // two or more annotators
  std::optional<double> percent_agreement;
  std::map<std::string, double> accuracy_vs_auto;  // per annotator, where auto labels exist
  std::vector<std::string> disagreements;

  bool operator==(const AgreementStats&) const = default;
};

AgreementStats compute_agreement(const LabelSession& session);
nlohmann::json to_json(const AgreementStats& stats);

/// Keeps agreement statistics current as labels arrive, without rescanning
/// the session for each query.
class AgreementTracker {
 public:
  explicit AgreementTracker(const LabelSession& session);
  void on_label(const std::string& annotator, const std::string& item_id, const std::string& outcome);
  AgreementStats stats() const;

 private:
  std::vector<std::string> annotators_;
  std::map<std::string, std::size_t> item_index_;
  std::map<std::string, std::optional<std::string>> auto_labels_;
  std::map<std::string, std::map<std::string, std::string>> by_item_;  // item -> annotator -> outcome
  std::map<std::size_t, std::vector<std::string>> complete_rows_;      // item index -> labels by annotator
  std::map<std::string, std::pair<std::size_t, std::size_t>> auto_hits_;  // annotator -> (matches, total)
};

/// New label_session artifact with `consensus` filled: unanimous items take
/// their label, disputed items take the resolution. Errors: precondition
/// when the session is incomplete, missing_resolution naming unresolved items.
LabelSession consensus_labels(const LabelSession& session, const std::map<std::string, std::string>& resolutions,
                              ArtifactContext& ctx, std::optional<std::string> artifact_id = std::nullopt);

/// Parallel (automatic, human) label lists for items with an auto label and
/// a consensus label, for judge validation.
std::pair<std::vector<std::string>, std::vector<std::string>> auto_vs_consensus(const LabelSession& session);

nlohmann::json session_summary(const LabelSession& session, const AgreementStats& stats);

/// Console labeling for one annotator. Reads one answer per line (outcome
/// number or name; "q" stops) and calls `checkpoint` after every label.
/// Returns the number of labels recorded.
std::size_t run_terminal_labeling(LabelSession& session, const std::string& annotator, std::istream& in,
                                  std::ostream& out, const std::function<void(const LabelSession&)>& checkpoint);

}  // namespace ookb
