// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli_runner.h"
#include "filter_oracle.h"
#include "ookb/agreement.h"
#include "ookb/error.h"
#include "ookb/evaluation.h"
#include "ookb/experiment.h"
#include "ookb/parsers.h"
#include "parser_fixtures.h"
#include "retrieval_oracle.h"
#include "test_support.h"

using namespace ookb;
using namespace ookb::testing;
namespace fs = std::filesystem;
using nlohmann::json;
using Seconds = std::chrono::duration<double>;

namespace {

// Tolerances and limits.
constexpr double kLooBudgetSeconds = 5.0;
constexpr double kPipelineBudgetSeconds = 10.0;
constexpr double kFactualityTol = 0.01;
constexpr double kAccuracyTol = 0.0001;
constexpr double kF1Tol = 0.01;
constexpr double kFleissTol = 1e-9;

const fs::path kDemo = fs::path(OOKB_SOURCE_DIR) / "data" / "demo";

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double elapsed(std::chrono::steady_clock::time_point since) {
  return Seconds(std::chrono::steady_clock::now() - since).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Clients {
  std::shared_ptr<CallbackClient> target = callback_client([](const ChatRequest&) { return std::string("Yes (1)."); });
  std::shared_ptr<CallbackClient> embedder =
      callback_client([](const ChatRequest&) { return std::string(); }, [](const std::string& t) { return tiny_embedding(t); });
  std::shared_ptr<CallbackClient> hyde = callback_client(hyde_answers_reply);
  RetrievalDeps deps() { return {embedder.get(), hyde.get()}; }
};

RetrievalConfig retrieval(RetrievalKind kind, int k) {
  RetrievalConfig r;
  r.kind = kind;
  r.k = k;
  return r;
}

Outcome loo_exclusion() {
  Outcome o;
  SeededRng rng(1);
  auto ctx = fixed_context();
  Clients c;
  std::size_t violations = 0, checked = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    const auto kb = random_kb(rng, 3 + rng.below(8), 3, ctx);
    for (auto kind : {RetrievalKind::direct, RetrievalKind::long_in_context, RetrievalKind::basic_rag,
                      RetrievalKind::hyde_rag}) {
      const auto spec = create_experiment(kb, default_prompt(PromptName::basic),
                                          retrieval(kind, 1 + static_cast<int>(rng.below(10))), "m", 0, ctx);
      const auto out = run_experiment(spec, kb, nullptr, *c.target, c.deps(), ctx);
      o.require(out.responses.size() == kb.pairs.size(), "missing responses");
      for (const auto& r : out.responses) {
        ++checked;
        o.require(r.status == ResponseStatus::ok, "question failed: " + r.error);
        for (const auto& e : r.context_snapshot) violations += e.pair_id == r.question_id;
      }
    }
  }
  const double secs = elapsed(start);
  o.require(violations == 0, std::to_string(violations) + " held-out pairs leaked");
  o.require(secs < kLooBudgetSeconds, "took " + num(secs) + " s");
  if (o.pass) o.detail = std::to_string(checked) + " questions, 0 violations, " + num(secs) + " s";
  return o;
}

Outcome retrieval_oracle() {
  Outcome o;
  SeededRng rng(2);
  auto ctx = fixed_context();
  Clients c;
  std::size_t compared = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto kb = random_kb(rng, 2 + rng.below(9), 3, ctx);
    const int k = 1 + static_cast<int>(rng.below(6));
    for (auto kind : {RetrievalKind::basic_rag, RetrievalKind::hyde_rag}) {
      auto strategy = make_strategy(retrieval(kind, k), c.deps());
      for (const auto& p : kb.pairs) {
        std::vector<int> got;
        for (const auto& e : build_context(kb, p.pair_id, p.question, *strategy)) got.push_back(e.pair_id);
        Embedding query;
        if (kind == RetrievalKind::basic_rag) {
          query = tiny_embedding(p.question);
        } else {
          std::vector<Embedding> parts;
          for (int i = 0; i < 3; ++i) parts.push_back(tiny_embedding("hypothesis " + std::to_string(i) + " for " + p.question));
          query = oracle_mean(parts);
        }
        ++compared;
        o.require(got == oracle_top_k(kb, p.pair_id, query, k),
                  "mismatch on trial " + std::to_string(trial) + " (" + std::string(to_string(kind)) + ")");
      }
    }
  }
  const auto m = mean_vector({{1, 0}, {0, 1}, {1, 1}});
  o.require(m == Embedding{2.0 / 3.0, 2.0 / 3.0}, "HyDE mean is [" + num(m[0]) + ", " + num(m[1]) + "]");
  if (o.pass) o.detail = std::to_string(compared) + " top-k lists identical, HyDE mean = [2/3, 2/3]";
  return o;
}

std::vector<QAPair> random_text_pairs(SeededRng& rng, std::size_t n) {
  static const std::vector<std::string> words = {"renew", "book", "fine", "fee", "room", "day", "card", "late", "desk"};
  std::vector<std::pair<std::string, std::string>> qa;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q, a;
    for (std::size_t w = 0, m = 1 + rng.below(4); w < m; ++w) q += words[rng.below(words.size())] + " ";
    for (std::size_t w = 0, m = 1 + rng.below(3); w < m; ++w) a += words[rng.below(words.size())] + " ";
    qa.emplace_back(q, a);
  }
  auto ctx = fixed_context();
  return make_qa_set(qa, ctx).pairs;
}

Outcome filter_oracle() {
  Outcome o;
  SeededRng rng(3);
  auto ctx = fixed_context();
  for (int trial = 0; trial < 500; ++trial) {
    const auto pairs = random_text_pairs(rng, 1 + rng.below(8));
    const double kt = static_cast<double>(rng.below(11)) / 10.0;
    o.require(keyword_filter(pairs, kt) == oracle_keyword_filter(pairs, kt),
              "keyword mismatch on trial " + std::to_string(trial));

    const auto kb = random_kb(rng, 1 + rng.below(8), 3, ctx);
    std::vector<Embedding> e;
    for (const auto& p : kb.pairs) e.push_back(*p.embedding);
    const double st = static_cast<double>(rng.below(11)) / 10.0;
    const auto kept = semantic_filter(kb.pairs, e, st);
    o.require(kept == oracle_semantic_filter(e, st), "semantic mismatch on trial " + std::to_string(trial));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        o.require(oracle_distance(e[kept[i]], e[kept[j]]) >= st,
                  "kept pairs closer than the threshold on trial " + std::to_string(trial));
      }
    }
  }
  const auto worked = make_qa_set({{"library hours", "open at nine"},
                                   {"library hours", "open at nine"},
                                   {"parking permit", "costs ten dollars"}},
                                  ctx);
  o.require(keyword_filter(worked.pairs, 0.3) == std::vector<std::size_t>{2}, "worked example kept other pairs");
  if (o.pass) o.detail = "500 keyword + 500 semantic instances match, worked example keeps only the distinct pair";
  return o;
}

Outcome rates() {
  Outcome o;
  std::vector<std::string> abst(10, "No");
  std::vector<std::optional<std::string>> fact(10);
  for (int i = 0; i < 4; ++i) abst[i] = "Yes";
  const std::vector<std::string> tiers = {"tier_1", "tier_2", "tier_3", "tier_3", "tier_3", "tier_3"};
  for (int i = 0; i < 6; ++i) fact[4 + i] = tiers[i];
  const auto f = factuality_rate(abst, fact);
  o.require(f && std::abs(*f - 33.33) <= kFactualityTol, "factuality = " + (f ? num(*f) : "null"));
  const double a = abstention_rate({"Yes", "No", "Uncertain", "No"});
  o.require(a == 25.0, "abstention = " + num(a));
  const auto none = factuality_rate({"Yes", "Yes", "Yes"}, {std::nullopt, std::nullopt, std::nullopt});
  o.require(!none, "zero non-abstained gave " + (none ? num(*none) : ""));
  if (o.pass) o.detail = "factuality " + num(*f) + "%, abstention 25%, no answers -> null";
  return o;
}

Outcome confusion() {
  Outcome o;
  const auto c = confusion_from_counts(125, 209, 1, 3);
  o.require(std::abs(c.accuracy - 0.9882) <= kAccuracyTol, "accuracy = " + num(c.accuracy));
  const auto f1 = f1_score(92.16, 89.81);
  o.require(f1 && std::abs(*f1 - 90.97) <= kF1Tol, "F1 = " + (f1 ? num(*f1) : "null"));
  if (o.pass) o.detail = "accuracy " + num(c.accuracy) + ", F1 " + num(*f1);
  return o;
}

std::optional<double> textbook_fleiss(const std::vector<std::vector<int>>& m) {
  const double N = static_cast<double>(m.size());
  double n = 0;
  for (int c : m[0]) n += c;
  double P_bar = 0;
  std::vector<double> col(m[0].size(), 0);
  for (const auto& row : m) {
    double sq = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      sq += row[j] * row[j];
      col[j] += row[j];
    }
    P_bar += (sq - n) / (n * (n - 1));
  }
  P_bar /= N;
  double Pe = 0;
  for (double c : col) Pe += (c / (N * n)) * (c / (N * n));
  if (Pe == 1.0) return std::nullopt;
  return (P_bar - Pe) / (1 - Pe);
}

Outcome agreement() {
  Outcome o;
  const auto k = cohen_kappa({"Y", "Y", "N", "N"}, {"Y", "N", "N", "N"});
  o.require(k && *k == 0.5, "cohen = " + (k ? num(*k) : "null"));
  SeededRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<int>> m(5, std::vector<int>(3, 0));
    const int raters = 2 + static_cast<int>(rng.below(5));
    for (auto& row : m) {
      for (int r = 0; r < raters; ++r) ++row[rng.below(3)];
    }
    const auto want = textbook_fleiss(m);
    const auto got = fleiss_kappa(m);
    o.require(want.has_value() == got.has_value() && (!want || std::abs(*want - *got) <= kFleissTol),
              "fleiss differs on trial " + std::to_string(trial));
  }
  const auto perfect_c = cohen_kappa({"Y", "N", "N"}, {"Y", "N", "N"});
  const auto perfect_f = fleiss_kappa(std::vector<std::vector<int>>{{2, 0}, {0, 2}, {0, 2}});
  o.require(perfect_c == 1.0 && perfect_f == 1.0, "perfect agreement is not 1.0");
  if (o.pass) o.detail = "cohen 0.5, 100 Fleiss matrices within 1e-9, perfect agreement 1.0";
  return o;
}

Outcome combinations() {
  Outcome o;
  const auto combos = valid_combinations();
  o.require(combos.size() == 10, std::to_string(combos.size()) + " combinations");
  for (auto p : {PromptName::conservative, PromptName::opinion_based}) {
    RetrievalConfig direct;
    o.require(validate_config(default_prompt(p), direct).has_value(),
              std::string(to_string(p)) + " with direct was accepted");
    auto ctx = fixed_context();
    const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
    bool rejected = false;
    try {
      create_experiment(kb, default_prompt(p), direct, "m", 0, ctx);
    } catch (const Error& e) {
      rejected = e.code() == ErrorCode::invalid_config;
    }
    o.require(rejected, std::string(to_string(p)) + " with direct was not rejected");
  }
  if (o.pass) o.detail = "10 valid combinations, 2 context-dependent prompts rejected with direct";
  return o;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_text(e.path());
  }
  return files;
}

CliResult run_demo_pipeline(const fs::path& store, double* secs) {
  const auto start = std::chrono::steady_clock::now();
  auto r = run_binary(OOKB_CLI_PATH, {"--config", (kDemo / "config.json").string(), "--store", store.string(),
                                      "pipeline", "--input", (kDemo / "policy.txt").string()});
  *secs = elapsed(start);
  return r;
}

std::string evaluated_id_from(const CliResult& r) {
  for (const auto& l : r.lines()) {
    std::istringstream in(l);
    std::string state, stage, id;
    in >> state >> stage >> id;
    if (stage == "evaluate") return id;
  }
  return "";
}

Outcome pipeline_demo(const TempDir& dir) {
  Outcome o;
  double t1 = 0, t2 = 0;
  const auto r1 = run_demo_pipeline(dir / "run1", &t1);
  const auto r2 = run_demo_pipeline(dir / "run2", &t2);
  o.require(r1.exit_code == 0 && r2.exit_code == 0, "pipeline failed: " + r1.err + r2.err);
  if (!o.pass) return o;
  o.require(t1 < kPipelineBudgetSeconds, "run took " + num(t1) + " s");

  ArtifactStore store(dir / "run1");
  const auto docs = store.list(ArtifactKind::source_document);
  o.require(docs.size() == 1 && store.load<SourceDocument>(docs[0].artifact_id).sentences.size() >= 4,
            "demo document has fewer than 4 sentences");

  const auto evaluated = evaluated_id_from(r1);
  const auto report = json::parse(read_text(store.root() / "reports" / (evaluated + ".json")));
  const auto& chain = report.at("lineage").at(evaluated);
  o.require(chain.size() >= 6 && chain.front().at("kind") == "source_document" &&
                chain.back().at("artifact_id") == evaluated,
            "report lineage does not run from source_document to the evaluated output");
  const auto lineage = run_binary(OOKB_CLI_PATH, {"--store", (dir / "run1").string(), "lineage", "--id", evaluated});
  o.require(lineage.exit_code == 0 && lineage.lines().front().rfind("source_document ", 0) == 0,
            "lineage command failed: " + lineage.err);

  std::size_t dangling = 0, artifacts = 0;
  for (auto kind : kAllKinds) {
    for (const auto& h : store.list(kind)) {
      ++artifacts;
      for (const auto& up : h.upstream_ids) dangling += !store.find_header(up).has_value();
    }
  }
  o.require(dangling == 0, std::to_string(dangling) + " dangling upstream ids");
  o.require(tree(dir / "run1") == tree(dir / "run2"), "reruns differ");
  if (o.pass) {
    o.detail = std::to_string(artifacts) + " artifacts, chain of " + std::to_string(chain.size()) +
               ", byte-identical rerun, " + num(t1) + " s";
  }
  return o;
}

Outcome parser_suite() {
  Outcome o;
  std::size_t cases = 0;
  for (const auto& c : tag_cases()) {
    ++cases;
    const auto spec = c.factuality ? factuality_tags() : abstention_tags();
    try {
      const auto got = extract_tag(c.text, spec);
      o.require(c.expected && got == *c.expected, "tag case " + c.name);
    } catch (const Error& e) {
      o.require(c.error && e.code() == *c.error, "tag case " + c.name);
    }
  }
  for (const auto& c : citation_cases()) {
    ++cases;
    try {
      const auto got = parse_citation(c.text);
      o.require(!c.ambiguous && got == c.expected, "citation case " + c.name);
    } catch (const Error& e) {
      o.require(c.ambiguous && e.code() == ErrorCode::ambiguous_citation, "citation case " + c.name);
    }
  }
  o.require(cases >= 20, "only " + std::to_string(cases) + " fixture cases");
  if (o.pass) o.detail = std::to_string(cases) + "/" + std::to_string(cases) + " fixture cases";
  return o;
}

Outcome labeling_session(const TempDir& dir) {
  Outcome o;
  const auto store = (dir / "run1").string();
  auto cli = [&](std::vector<std::string> args, const std::string& input = "") {
    args.insert(args.begin(), {"--store", store, "--seed", "11"});
    return run_binary(OOKB_CLI_PATH, args, input);
  };
  ArtifactStore s(store);
  const auto outputs = s.list(ArtifactKind::evaluated_output);
  o.require(!outputs.empty(), "no evaluated output to sample");
  if (!o.pass) return o;
  auto r = cli({"sample", "--evaluated", outputs[0].artifact_id, "--dimensions", "prompt", "--n", "4", "--annotators",
                "ann1,ann2"});
  o.require(r.exit_code == 0, "sample failed: " + r.err);
  const auto session = r.id_of("label_session");
  if (!o.pass) return o;
  o.require(s.load<LabelSession>(session).items.size() == 4, "session does not have 4 items");

  r = cli({"label", "tui", "--session", session, "--annotator", "ann1"}, "1\n1\n1\n1\n");
  o.require(r.exit_code == 0 && r.out.find("status open") != std::string::npos, "first annotator: " + r.err);
  r = cli({"label", "tui", "--session", session, "--annotator", "ann2"}, "1\n1\n1\n2\n");
  o.require(r.exit_code == 0 && r.out.find("status complete") != std::string::npos, "second annotator: " + r.err);
  json stats;
  for (const auto& l : r.lines()) {
    if (l.rfind("agreement ", 0) == 0) stats = json::parse(l.substr(10));
  }
  o.require(stats.is_object() && stats["items_compared"] == 4 && stats["cohen_kappa"].is_number() &&
                stats["fleiss_kappa"].is_number(),
            "missing agreement statistics");
  const auto disputed = r.id_of("disagreement");
  o.require(!disputed.empty() && stats["disagreements"].size() == 1, "expected exactly one flagged disagreement");
  if (!o.pass) return o;

  r = cli({"consensus", "--session", session, "--resolve", disputed + "=No"});
  o.require(r.exit_code == 0, "consensus failed: " + r.err);
  const auto consensus_id = r.id_of("label_session");
  if (!o.pass) return o;
  const auto consensus = s.load<LabelSession>(consensus_id);
  o.require(consensus.consensus.size() == 4 && consensus.consensus.at(disputed) == "No" &&
                consensus.header.upstream_ids.front() == session,
            "consensus artifact incomplete");
  if (o.pass) {
    o.detail = "kappa " + stats["cohen_kappa"].dump() + ", 1 disagreement, consensus " + consensus_id;
  }
  return o;
}

}  // namespace

int main() {
  TempDir dir;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"leave-one-out exclusion", loo_exclusion},
      {"RAG and HyDE retrieval match brute force", retrieval_oracle},
      {"diversity filters match brute force", filter_oracle},
      {"abstention and factuality rates", rates},
      {"confusion report and F1", confusion},
      {"Cohen and Fleiss kappa", agreement},
      {"prompt x strategy combinations", combinations},
      {"demo pipeline lineage and reproducibility", [&] { return pipeline_demo(dir); }},
      {"parser fixture suite", parser_suite},
      {"two-annotator terminal labeling session", [&] { return labeling_session(dir); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " -- "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
