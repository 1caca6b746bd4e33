#include "ookb/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <tuple>

#include "ookb/agreement.h"
#include "ookb/concurrency.h"
#include "ookb/error.h"
#include "ookb/parsers.h"
#include "ookb/prompts.h"

namespace ookb {

using nlohmann::json;

EvaluationSpec create_evaluation_spec(std::string evaluation_name, std::string prompt_identifier,
                                      std::string prompt_content, std::vector<std::string> outcomes,
                                      std::string tag_name, bool uses_expected_answer, ArtifactContext& ctx,
                                      std::optional<std::string> artifact_id) {
  if (trim(evaluation_name).empty()) throw Error(ErrorCode::schema, "evaluation_name: must not be empty");
  if (trim(prompt_content).empty()) throw Error(ErrorCode::schema, "prompt_content: must not be empty");
  validate(TagSpec{tag_name, outcomes});
  for (const auto& o : outcomes) {
    if (o == kUnparseable) throw Error(ErrorCode::schema, "evaluation_outcomes: '" + o + "' is reserved");
  }
  EvaluationSpec spec;
  spec.header = ctx.make_header(ArtifactKind::evaluation_spec, {},
                                {{std::string(meta::prompt_identifier), prompt_identifier}},
                                std::move(artifact_id));
  spec.evaluation_name = std::move(evaluation_name);
  spec.prompt_identifier = std::move(prompt_identifier);
  spec.prompt_content = std::move(prompt_content);
  spec.evaluation_outcomes = std::move(outcomes);
  spec.tag_name = std::move(tag_name);
  spec.uses_expected_answer = uses_expected_answer;
  return spec;
}

EvaluationSpec default_abstention_spec(ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  return create_evaluation_spec(std::string(kAbstentionCheck), "abstention_prompt_v1",
                                std::string(prompts::abstention_judge()), {"Yes", "No", "Uncertain"},
                                "abstention", false, ctx, std::move(artifact_id));
}

EvaluationSpec default_factuality_spec(ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  return create_evaluation_spec(std::string(kFactualityCheck), "factuality_prompt_v1",
                                std::string(prompts::factuality_judge()), {"tier_1", "tier_2", "tier_3"},
                                "factuality", true, ctx, std::move(artifact_id));
}

std::string judge_system_prompt(const EvaluationSpec& spec) {
  std::string csv;
  for (const auto& o : spec.evaluation_outcomes) csv += (csv.empty() ? "" : ", ") + o;
  return spec.prompt_content + prompts::judge_format(spec.tag_name, csv);
}

std::string render_judge_message(const EvaluationSpec& spec, const std::string& question,
                                 const std::string& model_answer, const std::string& expected_answer) {
  std::string out = "Question: " + question + "\n\nModel Answer: " + model_answer;
  if (spec.uses_expected_answer) out += "\n\nExpected Answer: " + expected_answer;
  return out;
}

EvaluatedOutput evaluate_responses(const ExperimentOutput& output, const std::vector<EvaluationSpec>& specs,
                                   LlmClient& judge, ArtifactContext& ctx, std::optional<std::string> artifact_id) {
  if (specs.empty()) throw Error(ErrorCode::precondition, "no evaluation specs given");
  std::set<std::string> names;
  for (const auto& s : specs) {
    validate(s);
    if (!names.insert(s.evaluation_name).second) {
      throw Error(ErrorCode::precondition, "evaluation '" + s.evaluation_name + "' given twice");
    }
  }
  const auto gt = output.header.metadata.find(std::string(meta::ground_truth));
  if (gt != output.header.metadata.end() && gt->second == "absent") {
    for (const auto& s : specs) {
      if (s.uses_expected_answer) {
        throw Error(ErrorCode::rejected_evaluation,
                    "'" + s.evaluation_name + "' compares against expected answers, but output " +
                        output.header.artifact_id + " has no ground truth");
      }
    }
  }
  std::vector<const SavedResponse*> todo;
  for (const auto& r : output.responses) {
    if (r.status == ResponseStatus::ok) todo.push_back(&r);
  }
  if (todo.empty()) throw Error(ErrorCode::precondition, "output " + output.header.artifact_id + " has no successful responses");

  // Abstention first so its verdict can gate the others.
  std::vector<const EvaluationSpec*> ordered;
  for (const auto& s : specs) {
    if (s.evaluation_name == kAbstentionCheck) ordered.push_back(&s);
  }
  for (const auto& s : specs) {
    if (s.evaluation_name != kAbstentionCheck) ordered.push_back(&s);
  }

  std::vector<EvaluatedResponse> results(todo.size());
  parallel_for(todo.size(), judge.config().max_inflight, [&](std::size_t i) {
    const SavedResponse& r = *todo[i];
    EvaluatedResponse& e = results[i];
    e.question_id = r.question_id;
    e.question = r.question;
    e.model_answer = r.raw_text;
    e.expected_answer = r.expected_answer;
    e.judge_model = judge.model();
    for (const auto* spec : ordered) {
      if (spec->evaluation_name != kAbstentionCheck) {
        auto it = e.outcomes.find(std::string(kAbstentionCheck));
        if (it != e.outcomes.end() && it->second == kAbstained) continue;
      }
      const std::string raw = judge.chat(
          {judge_system_prompt(*spec), render_judge_message(*spec, r.question, r.raw_text, r.expected_answer)});
      e.judge_raw[spec->evaluation_name] = raw;
      try {
        e.outcomes[spec->evaluation_name] = extract_tag(raw, {spec->tag_name, spec->evaluation_outcomes});
      } catch (const Error& err) {
        if (err.category() != ErrorCategory::validation) throw;
        e.outcomes[spec->evaluation_name] = std::string(kUnparseable);
      }
    }
  });

  EvaluatedOutput out;
  out.responses = std::move(results);
  Metadata metadata;
  for (const auto& key : {std::string(meta::prompt_identifier), std::string(meta::retrieval_strategy),
                          std::string(meta::domain), std::string(meta::ground_truth), std::string("experiment_type"),
                          std::string("k")}) {
    if (auto it = output.header.metadata.find(key); it != output.header.metadata.end()) metadata[key] = it->second;
  }
  if (auto it = output.header.metadata.find(std::string(meta::model)); it != output.header.metadata.end()) {
    metadata["target_model"] = it->second;
  }
  metadata[std::string(meta::model)] = judge.model();
  std::string evaluations;
  for (const auto* s : ordered) evaluations += (evaluations.empty() ? "" : ",") + s->evaluation_name;
  metadata["evaluations"] = evaluations;
  metadata["skipped_errors"] = std::to_string(output.responses.size() - todo.size());
  metadata["unparseable_count"] = std::to_string(unparseable_count(out));
  std::vector<std::string> upstream = {output.header.artifact_id};
  for (const auto* s : ordered) upstream.push_back(s->header.artifact_id);
  out.header = ctx.make_header(ArtifactKind::evaluated_output, std::move(upstream), std::move(metadata),
                               std::move(artifact_id));
  return out;
}

std::size_t unparseable_count(const EvaluatedOutput& evaluated) {
  std::size_t n = 0;
  for (const auto& r : evaluated.responses) {
    for (const auto& [_, outcome] : r.outcomes) n += outcome == kUnparseable;
  }
  return n;
}

void enforce_parse_budget(const EvaluatedOutput& evaluated) {
  std::size_t total = 0;
  for (const auto& r : evaluated.responses) total += r.outcomes.size();
  const auto bad = unparseable_count(evaluated);
  if (total > 0 && static_cast<double>(bad) / static_cast<double>(total) > kMaxUnparseableRate) {
    throw Error(ErrorCode::unparseable_judgments,
                std::to_string(bad) + " of " + std::to_string(total) + " judgments could not be parsed");
  }
}

// ---------------------------------------------------------------------------

double abstention_rate(const std::vector<std::string>& abstention_outcomes) {
  if (abstention_outcomes.empty()) throw Error(ErrorCode::precondition, "no abstention outcomes");
  const auto yes = std::count(abstention_outcomes.begin(), abstention_outcomes.end(), std::string(kAbstained));
  return 100.0 * static_cast<double>(yes) / static_cast<double>(abstention_outcomes.size());
}

std::optional<double> factuality_rate(const std::vector<std::string>& abstention_outcomes,
                                      const std::vector<std::optional<std::string>>& factuality_outcomes) {
  if (abstention_outcomes.size() != factuality_outcomes.size()) {
    throw Error(ErrorCode::length_mismatch, "abstention and factuality outcome lists differ in length");
  }
  std::size_t denominator = 0, factual = 0;
  for (std::size_t i = 0; i < abstention_outcomes.size(); ++i) {
    if (abstention_outcomes[i] == kAbstained) continue;
    ++denominator;
    const auto& f = factuality_outcomes[i];
    if (f && (*f == "tier_1" || *f == "tier_2")) ++factual;
  }
  if (denominator == 0) return std::nullopt;
  return 100.0 * static_cast<double>(factual) / static_cast<double>(denominator);
}

namespace {

std::vector<std::string> abstention_column(const std::vector<EvaluatedResponse>& responses) {
  std::vector<std::string> out;
  for (const auto& r : responses) {
    auto it = r.outcomes.find(std::string(kAbstentionCheck));
    if (it == r.outcomes.end()) {
      throw Error(ErrorCode::precondition, "question " + std::to_string(r.question_id) + " has no " +
                                               std::string(kAbstentionCheck) + " outcome");
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::optional<std::string>> factuality_column(const std::vector<EvaluatedResponse>& responses) {
  std::vector<std::optional<std::string>> out;
  for (const auto& r : responses) {
    auto it = r.outcomes.find(std::string(kFactualityCheck));
    out.push_back(it == r.outcomes.end() ? std::nullopt : std::optional<std::string>(it->second));
  }
  return out;
}

bool has_factuality(const std::vector<EvaluatedResponse>& responses) {
  return std::any_of(responses.begin(), responses.end(), [](const EvaluatedResponse& r) {
    return r.outcomes.count(std::string(kFactualityCheck)) > 0;
  });
}

}  // namespace

double compute_abstention_rate(const EvaluatedOutput& evaluated) {
  return abstention_rate(abstention_column(evaluated.responses));
}

std::optional<double> compute_factuality_rate(const EvaluatedOutput& evaluated) {
  const auto abst = abstention_column(evaluated.responses);
  const bool any_answered = std::any_of(abst.begin(), abst.end(), [](const auto& a) { return a != kAbstained; });
  if (any_answered && !has_factuality(evaluated.responses)) {
    throw Error(ErrorCode::precondition, "output " + evaluated.header.artifact_id + " has no " +
                                             std::string(kFactualityCheck) + " outcomes");
  }
  return factuality_rate(abst, factuality_column(evaluated.responses));
}

RateSummary summarize(const std::vector<EvaluatedResponse>& responses) {
  RateSummary s;
  s.evaluated = responses.size();
  for (const auto& r : responses) {
    auto a = r.outcomes.find(std::string(kAbstentionCheck));
    if (a != r.outcomes.end()) {
      ++s.abstention_counts[a->second];
      if (a->second == kAbstained) {
        ++s.abstained;
        continue;
      }
    }
    ++s.non_abstained;
    auto f = r.outcomes.find(std::string(kFactualityCheck));
    if (f != r.outcomes.end()) {
      ++s.factuality_counts[f->second];
      if (f->second == "tier_1" || f->second == "tier_2") ++s.factual;
    }
  }
  const bool has_abstention = std::all_of(responses.begin(), responses.end(), [](const EvaluatedResponse& r) {
    return r.outcomes.count(std::string(kAbstentionCheck)) > 0;
  });
  if (!responses.empty() && has_abstention) {
    s.abstention_rate = abstention_rate(abstention_column(responses));
    if (has_factuality(responses)) s.factuality_rate = factuality_rate(abstention_column(responses), factuality_column(responses));
  }
  return s;
}

MetricsReport build_report(const std::vector<EvaluatedOutput>& outputs) {
  MetricsReport report;
  std::vector<EvaluatedResponse> all;
  for (const auto& o : outputs) {
    auto get = [&](std::string_view key) {
      auto it = o.header.metadata.find(std::string(key));
      return it == o.header.metadata.end() ? std::string() : it->second;
    };
    report.rows.push_back({o.header.artifact_id, get(meta::prompt_identifier), get(meta::retrieval_strategy),
                           get(meta::domain), get("target_model"), summarize(o.responses)});
    all.insert(all.end(), o.responses.begin(), o.responses.end());
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.prompt, a.strategy, a.domain, a.evaluated_output_id) <
           std::tie(b.prompt, b.strategy, b.domain, b.evaluated_output_id);
  });
  report.overall = summarize(all);
  return report;
}

namespace {

json rate_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const RateSummary& s) {
  return {{"evaluated", s.evaluated},
          {"abstained", s.abstained},
          {"non_abstained", s.non_abstained},
          {"factual", s.factual},
          {"abstention_rate", rate_json(s.abstention_rate)},
          {"factuality_rate", rate_json(s.factuality_rate)},
          {"abstention_denominator", s.evaluated},
          {"factuality_denominator", s.non_abstained},
          {"abstention_counts", s.abstention_counts},
          {"factuality_counts", s.factuality_counts}};
}

std::string fmt_rate(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

json to_json(const MetricsReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"evaluated_output_id", r.evaluated_output_id},
                    {"prompt", r.prompt},
                    {"strategy", r.strategy},
                    {"domain", r.domain},
                    {"target_model", r.target_model},
                    {"rates", to_json(r.rates)}});
  }
  return {{"rows", rows}, {"overall", to_json(report.overall)}};
}

std::string render_table(const MetricsReport& report) {
  std::vector<std::vector<std::string>> cells = {
      {"Prompt", "Strategy", "Domain", "N", "Abstention (%)", "Factuality (%)"}};
  for (const auto& r : report.rows) {
    cells.push_back({r.prompt, r.strategy, r.domain.empty() ? "-" : r.domain, std::to_string(r.rates.evaluated),
                     fmt_rate(r.rates.abstention_rate), fmt_rate(r.rates.factuality_rate)});
  }
  cells.push_back({"Overall", "", "", std::to_string(report.overall.evaluated),
                   fmt_rate(report.overall.abstention_rate), fmt_rate(report.overall.factuality_rate)});
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? " | " : "") << row[c] << std::string(width[c] - row[c].size(), ' ');
    }
    out << '\n';
  };
  line(cells.front());
  for (std::size_t c = 0; c < width.size(); ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
  out << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) line(cells[i]);
  return out.str();
}

// ---------------------------------------------------------------------------

std::optional<double> f1_score(double precision, double recall) {
  if (precision + recall <= 0.0) return std::nullopt;
  return 2.0 * precision * recall / (precision + recall);
}

ConfusionReport confusion_from_counts(std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
  ConfusionReport c;
  c.tp = tp;
  c.tn = tn;
  c.fp = fp;
  c.fn = fn;
  const double total = static_cast<double>(tp + tn + fp + fn);
  if (total == 0) throw Error(ErrorCode::precondition, "empty confusion matrix");
  c.accuracy = static_cast<double>(tp + tn) / total;
  if (tp + fp > 0) c.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) c.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (c.precision && c.recall) c.f1 = f1_score(*c.precision, *c.recall);
  // Binary Cohen's kappa from the marginals.
  const double pe = (static_cast<double>(tp + fp) * static_cast<double>(tp + fn) +
                     static_cast<double>(tn + fn) * static_cast<double>(tn + fp)) /
                    (total * total);
  if (pe < 1.0 - 1e-12) {
    c.kappa = (c.accuracy - pe) / (1.0 - pe);
  } else if (c.accuracy >= 1.0 - 1e-12) {
    c.kappa = 1.0;
  }
  return c;
}

ConfusionReport validate_evaluator(const std::vector<std::string>& automatic, const std::vector<std::string>& human,
                                   const std::string& positive) {
  if (automatic.size() != human.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(automatic.size()) + " automatic labels vs " +
                                                std::to_string(human.size()) + " human labels");
  }
  if (automatic.empty()) throw Error(ErrorCode::precondition, "no labels to compare");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < automatic.size(); ++i) {
    const bool a = automatic[i] == positive;
    const bool h = human[i] == positive;
    if (a && h) ++tp;
    else if (!a && !h) ++tn;
    else if (a) ++fp;
    else ++fn;
  }
  return confusion_from_counts(tp, tn, fp, fn);
}

json to_json(const ConfusionReport& r) {
  return {{"tp", r.tp},
          {"tn", r.tn},
          {"fp", r.fp},
          {"fn", r.fn},
          {"samples", r.tp + r.tn + r.fp + r.fn},
          {"accuracy", r.accuracy},
          {"precision", rate_json(r.precision)},
          {"recall", rate_json(r.recall)},
          {"f1", rate_json(r.f1)},
          {"kappa", rate_json(r.kappa)}};
}

CrossTab cross_tabulate(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b,
                        Normalize normalize) {
  if (labels_a.size() != labels_b.size()) {
    throw Error(ErrorCode::length_mismatch, "label lists differ in length");
  }
  CrossTab t;
  std::map<std::string, std::size_t> row_total, col_total;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    const auto& a = labels_a[i];
    const auto& b = labels_b[i];
    if (!row_total.count(a)) t.rows.push_back(a);
    if (!col_total.count(b)) t.columns.push_back(b);
    ++row_total[a];
    ++col_total[b];
    ++t.counts[a][b];
  }
  for (const auto& [a, cols] : t.counts) {
    for (const auto& [b, n] : cols) {
      const double denom = static_cast<double>(normalize == Normalize::by_a ? row_total[a] : col_total[b]);
      t.percent[a][b] = 100.0 * static_cast<double>(n) / denom;
    }
  }
  return t;
}

json to_json(const CrossTab& t) {
  return {{"rows", t.rows}, {"columns", t.columns}, {"percent", t.percent}, {"counts", t.counts}};
}

}  // namespace ookb
