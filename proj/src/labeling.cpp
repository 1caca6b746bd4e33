#include "ookb/labeling.h"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>

#include "ookb/agreement.h"
#include "ookb/error.h"
#include "ookb/hashing.h"
#include "ookb/parsers.h"

namespace ookb {

using nlohmann::json;

namespace {

std::string canonical_dimension(const std::string& d) {
  if (d == "prompt") return std::string(meta::prompt_identifier);
  if (d == "strategy" || d == "retrieval") return std::string(meta::retrieval_strategy);
  return d;
}

std::string dimension_value(const EvaluatedOutput& output, const EvaluatedResponse& r, const std::string& dim) {
  const auto key = canonical_dimension(dim);
  if (auto it = output.header.metadata.find(key); it != output.header.metadata.end()) return it->second;
  if (auto it = r.outcomes.find(dim); it != r.outcomes.end()) return it->second;
  throw Error(ErrorCode::unknown_dimension,
              "'" + dim + "' is neither metadata of " + output.header.artifact_id + " nor an evaluation name");
}

}  // namespace

std::vector<LabelItem> stratified_sample(const std::vector<EvaluatedOutput>& outputs,
                                         const std::vector<std::string>& dimensions, int n_per_stratum,
                                         std::uint64_t seed, const std::string& auto_label_from) {
  if (n_per_stratum < 1) throw Error(ErrorCode::precondition, "n_per_stratum must be >= 1");
  if (outputs.empty()) throw Error(ErrorCode::precondition, "no evaluated outputs to sample from");
  std::map<std::vector<std::string>, std::vector<LabelItem>> strata;
  for (const auto& output : outputs) {
    const auto gt = output.header.metadata.find(std::string(meta::ground_truth));
    const bool has_truth = gt == output.header.metadata.end() || gt->second != "absent";
    for (const auto& r : output.responses) {
      std::vector<std::string> key;
      Metadata stratum;
      for (const auto& d : dimensions) {
        key.push_back(dimension_value(output, r, d));
        stratum[d] = key.back();
      }
      LabelItem item;
      item.item_id = output.header.artifact_id + ":" + std::to_string(r.question_id);
      item.evaluated_output_id = output.header.artifact_id;
      item.question_id = r.question_id;
      item.question = r.question;
      item.model_answer = r.model_answer;
      if (has_truth) item.expected_answer = r.expected_answer;
      item.stratum = std::move(stratum);
      if (!auto_label_from.empty()) {
        if (auto it = r.outcomes.find(auto_label_from); it != r.outcomes.end()) item.auto_label = it->second;
      }
      strata[key].push_back(std::move(item));
    }
  }
  SeededRng rng(seed);
  std::vector<LabelItem> out;
  for (auto& [_, items] : strata) {
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(std::min(order.size(), static_cast<std::size_t>(n_per_stratum)));
    std::sort(order.begin(), order.end());
    for (auto i : order) out.push_back(items[i]);
  }
  return out;
}

LabelSession create_session(std::vector<LabelItem> items, const EvaluationSpec& schema,
                            std::vector<std::string> annotators, std::uint64_t seed, ArtifactContext& ctx,
                            std::optional<std::string> artifact_id) {
  if (items.empty()) throw Error(ErrorCode::precondition, "no items to label");
  if (annotators.empty()) throw Error(ErrorCode::precondition, "at least one annotator is required");
  std::set<std::string> seen;
  for (const auto& a : annotators) {
    if (trim(a).empty() || !seen.insert(a).second) {
      throw Error(ErrorCode::precondition, "annotator ids must be distinct and non-empty");
    }
  }
  LabelSession s;
  s.schema = {schema.header.artifact_id, schema.evaluation_name, schema.evaluation_outcomes};
  s.items = std::move(items);
  s.annotators = std::move(annotators);
  std::vector<std::string> ids;
  for (const auto& item : s.items) ids.push_back(item.item_id);
  for (const auto& a : s.annotators) {
    auto order = ids;
    SeededRng rng(hash64(a, seed));
    rng.shuffle(order);
    s.presentation_order[a] = std::move(order);
    s.labels[a];
  }
  std::vector<std::string> upstream;
  for (const auto& item : s.items) {
    if (std::find(upstream.begin(), upstream.end(), item.evaluated_output_id) == upstream.end()) {
      upstream.push_back(item.evaluated_output_id);
    }
  }
  upstream.push_back(schema.header.artifact_id);
  s.header = ctx.make_header(ArtifactKind::label_session, std::move(upstream),
                             {{"evaluation_name", schema.evaluation_name},
                              {"annotators", std::to_string(s.annotators.size())},
                              {"items", std::to_string(s.items.size())},
                              {"seed", std::to_string(seed)}},
                             std::move(artifact_id));
  validate(s);
  return s;
}

std::string record_label(LabelSession& session, const std::string& annotator, const std::string& item_id,
                         const std::string& outcome) {
  if (std::find(session.annotators.begin(), session.annotators.end(), annotator) == session.annotators.end()) {
    throw Error(ErrorCode::precondition, "unknown annotator '" + annotator + "'");
  }
  const bool known_item = std::any_of(session.items.begin(), session.items.end(),
                                      [&](const LabelItem& i) { return i.item_id == item_id; });
  if (!known_item) throw Error(ErrorCode::precondition, "unknown item '" + item_id + "'");
  std::optional<std::string> canonical;
  for (const auto& o : session.schema.outcomes) {
    if (to_lower(o) == to_lower(trim(outcome))) canonical = o;
  }
  if (!canonical) throw Error(ErrorCode::schema, "outcome '" + outcome + "' is not in the label schema");
  auto& cells = session.labels[annotator];
  if (cells.count(item_id)) {
    throw Error(ErrorCode::already_labeled, annotator + " already labeled " + item_id + " as " + cells[item_id]);
  }
  cells[item_id] = *canonical;
  std::size_t filled = 0;
  for (const auto& [_, c] : session.labels) filled += c.size();
  if (filled == session.items.size() * session.annotators.size()) session.status = SessionStatus::complete;
  return *canonical;
}

const LabelItem* next_item(const LabelSession& session, const std::string& annotator) {
  auto order = session.presentation_order.find(annotator);
  if (order == session.presentation_order.end()) throw Error(ErrorCode::precondition, "unknown annotator '" + annotator + "'");
  const auto labels = session.labels.find(annotator);
  for (const auto& id : order->second) {
    if (labels != session.labels.end() && labels->second.count(id)) continue;
    for (const auto& item : session.items) {
      if (item.item_id == id) return &item;
    }
  }
  return nullptr;
}

std::size_t labeled_count(const LabelSession& session, const std::string& annotator) {
  auto it = session.labels.find(annotator);
  return it == session.labels.end() ? 0 : it->second.size();
}

std::vector<std::string> fully_labeled_items(const LabelSession& session) {
  std::vector<std::string> out;
  for (const auto& item : session.items) {
    const bool all = std::all_of(session.annotators.begin(), session.annotators.end(), [&](const std::string& a) {
      auto it = session.labels.find(a);
      return it != session.labels.end() && it->second.count(item.item_id);
    });
    if (all) out.push_back(item.item_id);
  }
  return out;
}

std::vector<std::string> disagreements(const LabelSession& session) {
  if (session.annotators.size() < 2) throw Error(ErrorCode::precondition, "disagreements need at least 2 annotators");
  std::vector<std::string> out;
  for (const auto& id : fully_labeled_items(session)) {
    std::set<std::string> distinct;
    for (const auto& a : session.annotators) distinct.insert(session.labels.at(a).at(id));
    if (distinct.size() > 1) out.push_back(id);
  }
  return out;
}

json disagreement_details(const LabelSession& session) {
  json out = json::array();
  for (const auto& id : disagreements(session)) {
    const auto& item = *std::find_if(session.items.begin(), session.items.end(),
                                     [&](const LabelItem& i) { return i.item_id == id; });
    json labels = json::object();
    for (const auto& a : session.annotators) labels[a] = session.labels.at(a).at(id);
    out.push_back({{"item_id", id},
                   {"question", item.question},
                   {"model_answer", item.model_answer},
                   {"expected_answer", item.expected_answer ? json(*item.expected_answer) : json(nullptr)},
                   {"auto_label", item.auto_label ? json(*item.auto_label) : json(nullptr)},
                   {"labels", labels},
                   {"resolution", session.resolutions.count(id) ? json(session.resolutions.at(id)) : json(nullptr)}});
  }
  return out;
}

namespace {

// Shared by the batch and incremental paths so both apply identical rules.
AgreementStats stats_from_rows(const std::vector<std::string>& annotators,
                               const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
                               const std::map<std::string, std::pair<std::size_t, std::size_t>>& auto_hits) {
  AgreementStats s;
  s.items_compared = rows.size();
  for (const auto& [id, labels] : rows) {
    if (std::set<std::string>(labels.begin(), labels.end()).size() > 1) s.disagreements.push_back(id);
  }
  for (const auto& [a, hits] : auto_hits) {
    if (hits.second > 0) s.accuracy_vs_auto[a] = static_cast<double>(hits.first) / static_cast<double>(hits.second);
  }
  if (annotators.size() < 2 || rows.empty()) return s;
  std::vector<std::vector<std::string>> per_item;
  for (const auto& [_, labels] : rows) per_item.push_back(labels);
  s.fleiss_kappa = fleiss_kappa(per_item);
  s.percent_agreement =
      static_cast<double>(rows.size() - s.disagreements.size()) / static_cast<double>(rows.size());
  if (annotators.size() == 2) {
    std::vector<std::string> a, b;
    for (const auto& [_, labels] : rows) {
      a.push_back(labels[0]);
      b.push_back(labels[1]);
    }
    s.cohen_kappa = cohen_kappa(a, b);
  }
  return s;
}

}  // namespace

AgreementStats compute_agreement(const LabelSession& session) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (const auto& id : fully_labeled_items(session)) {
    std::vector<std::string> labels;
    for (const auto& a : session.annotators) labels.push_back(session.labels.at(a).at(id));
    rows.emplace_back(id, std::move(labels));
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> auto_hits;
  for (const auto& item : session.items) {
    if (!item.auto_label) continue;
    for (const auto& a : session.annotators) {
      auto it = session.labels.find(a);
      if (it == session.labels.end()) continue;
      auto cell = it->second.find(item.item_id);
      if (cell == it->second.end()) continue;
      auto& h = auto_hits[a];
      h.first += cell->second == *item.auto_label;
      ++h.second;
    }
  }
  return stats_from_rows(session.annotators, rows, auto_hits);
}

json to_json(const AgreementStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"items_compared", s.items_compared},
          {"cohen_kappa", opt(s.cohen_kappa)},
          {"fleiss_kappa", opt(s.fleiss_kappa)},
          {"percent_agreement", opt(s.percent_agreement)},
          {"accuracy_vs", s.accuracy_vs_auto.empty() ? json(nullptr) : json(s.accuracy_vs_auto)},
          {"disagreements", s.disagreements}};
}

AgreementTracker::AgreementTracker(const LabelSession& session) : annotators_(session.annotators) {
  for (std::size_t i = 0; i < session.items.size(); ++i) {
    item_index_[session.items[i].item_id] = i;
    auto_labels_[session.items[i].item_id] = session.items[i].auto_label;
  }
  for (const auto& [annotator, cells] : session.labels) {
    for (const auto& [item, outcome] : cells) on_label(annotator, item, outcome);
  }
}

void AgreementTracker::on_label(const std::string& annotator, const std::string& item_id,
                                const std::string& outcome) {
  auto& cells = by_item_[item_id];
  cells[annotator] = outcome;
  if (const auto& auto_label = auto_labels_[item_id]) {
    auto& h = auto_hits_[annotator];
    h.first += outcome == *auto_label;
    ++h.second;
  }
  if (cells.size() == annotators_.size()) {
    std::vector<std::string> row;
    for (const auto& a : annotators_) row.push_back(cells.at(a));
    complete_rows_[item_index_.at(item_id)] = std::move(row);
  }
}

AgreementStats AgreementTracker::stats() const {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  std::map<std::size_t, std::string> ids;
  for (const auto& [id, index] : item_index_) ids[index] = id;
  for (const auto& [index, labels] : complete_rows_) rows.emplace_back(ids.at(index), labels);
  return stats_from_rows(annotators_, rows, auto_hits_);
}

LabelSession consensus_labels(const LabelSession& session, const std::map<std::string, std::string>& resolutions,
                              ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  if (session.status != SessionStatus::complete) {
    throw Error(ErrorCode::precondition, "session " + session.header.artifact_id + " still has unlabeled items");
  }
  const auto disputed = session.annotators.size() >= 2 ? disagreements(session) : std::vector<std::string>{};
  std::vector<std::string> missing;
  for (const auto& id : disputed) {
    if (!resolutions.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::missing_resolution, "unresolved disagreements: " + list);
  }
  LabelSession out = session;
  out.resolutions.clear();
  out.consensus.clear();
  for (const auto& id : disputed) {
    const auto& wanted = resolutions.at(id);
    auto match = std::find_if(session.schema.outcomes.begin(), session.schema.outcomes.end(),
                              [&](const std::string& o) { return to_lower(o) == to_lower(trim(wanted)); });
    if (match == session.schema.outcomes.end()) {
      throw Error(ErrorCode::schema, "resolution '" + wanted + "' for " + id + " is not in the label schema");
    }
    out.resolutions[id] = *match;
  }
  for (const auto& item : session.items) {
    const auto& id = item.item_id;
    out.consensus[id] = out.resolutions.count(id) ? out.resolutions.at(id) : session.labels.at(session.annotators.front()).at(id);
  }
  Metadata metadata = session.header.metadata;
  metadata["consensus_of"] = session.header.artifact_id;
  metadata["resolved"] = std::to_string(out.resolutions.size());
  out.header = ctx.make_header(ArtifactKind::label_session, {session.header.artifact_id, session.schema.evaluation_spec_id},
                               std::move(metadata), std::move(artifact_id));
  return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> auto_vs_consensus(const LabelSession& session) {
  std::vector<std::string> automatic, human;
  for (const auto& item : session.items) {
    auto c = session.consensus.find(item.item_id);
    if (!item.auto_label || c == session.consensus.end()) continue;
    automatic.push_back(*item.auto_label);
    human.push_back(c->second);
  }
  return {automatic, human};
}

json session_summary(const LabelSession& session, const AgreementStats& stats) {
  json progress = json::object();
  for (const auto& a : session.annotators) {
    progress[a] = {{"labeled", labeled_count(session, a)}, {"total", session.items.size()}};
  }
  return {{"session_id", session.header.artifact_id},
          {"status", session.status == SessionStatus::complete ? "complete" : "open"},
          {"evaluation_name", session.schema.evaluation_name},
          {"outcomes", session.schema.outcomes},
          {"items", session.items.size()},
          {"annotators", session.annotators},
          {"progress", progress},
          {"agreement", to_json(stats)}};
}

std::size_t run_terminal_labeling(LabelSession& session, const std::string& annotator, std::istream& in,
                                  std::ostream& out, const std::function<void(const LabelSession&)>& checkpoint) {
  std::size_t recorded = 0;
  const auto& outcomes = session.schema.outcomes;
  while (const LabelItem* item = next_item(session, annotator)) {
    out << "\n[" << labeled_count(session, annotator) + 1 << "/" << session.items.size() << "] " << item->item_id
        << "\nQuestion: " << item->question << "\nModel answer: " << item->model_answer << '\n';
    if (item->expected_answer) out << "Expected answer: " << *item->expected_answer << '\n';
    for (std::size_t i = 0; i < outcomes.size(); ++i) out << "  " << i + 1 << ") " << outcomes[i] << '\n';
    out << session.schema.evaluation_name << " (number or name, q to stop): " << std::flush;

    std::string line;
    if (!std::getline(in, line)) break;
    line = trim(line);
    if (line == "q" || line == "quit") break;
    std::string choice = line;
    if (!line.empty() && line.size() < 9 && std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isdigit(c); })) {
      const auto n = std::stoul(line);
      if (n >= 1 && n <= outcomes.size()) choice = outcomes[n - 1];
    }
    try {
      const auto stored = record_label(session, annotator, item->item_id, choice);
      ++recorded;
      out << "Recorded " << stored << '\n';
      if (checkpoint) checkpoint(session);
    } catch (const Error& e) {
      out << e.what() << '\n';
    }
  }
  if (!next_item(session, annotator)) out << "\nAll " << session.items.size() << " items labeled.\n";
  return recorded;
}

}  // namespace ookb
