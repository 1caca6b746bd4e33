#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <set>

#include "ookb/error.h"
#include "ookb/experiment.h"
#include "retrieval_oracle.h"
#include "test_support.h"

using namespace ookb;
using namespace ookb::testing;

namespace {

RetrievalConfig retrieval(RetrievalKind kind, int k = 5) {
  RetrievalConfig r;
  r.kind = kind;
  r.k = k;
  return r;
}

struct Rig {
  std::shared_ptr<CallbackClient> target = callback_client([](const ChatRequest&) { return std::string("Answer (1)."); });
  std::shared_ptr<CallbackClient> embedder =
      callback_client([](const ChatRequest&) { return std::string(); }, [](const std::string& t) { return tiny_embedding(t); });
  std::shared_ptr<CallbackClient> hyde = callback_client(hyde_answers_reply);
  RetrievalDeps deps() { return {embedder.get(), hyde.get()}; }
};

}  // namespace

TEST(Configuration, TenValidCombinations) {
  const auto combos = valid_combinations();
  EXPECT_EQ(combos.size(), 10u);
  for (auto p : {PromptName::conservative, PromptName::opinion_based}) {
    EXPECT_TRUE(validate_config(default_prompt(p), retrieval(RetrievalKind::direct)));
    EXPECT_EQ(std::count(combos.begin(), combos.end(), std::make_pair(p, RetrievalKind::direct)), 0);
  }
  EXPECT_FALSE(validate_config(default_prompt(PromptName::basic), retrieval(RetrievalKind::direct)));
  EXPECT_TRUE(validate_config(default_prompt(PromptName::basic), retrieval(RetrievalKind::basic_rag, 0)));
  auto custom = retrieval(RetrievalKind::custom);
  EXPECT_TRUE(validate_config(default_prompt(PromptName::basic), custom));
}

TEST(Configuration, CreateExperimentRejectsInvalidPairs) {
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
  try {
    create_experiment(kb, default_prompt(PromptName::conservative), retrieval(RetrievalKind::direct), "m", 0, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_config);
    EXPECT_EQ(exit_code_for(e.category()), 2);
  }
  EXPECT_THROW(custom_prompt("", "text", false), Error);
  EXPECT_THROW(custom_prompt("id", "  ", false), Error);
}

TEST(Configuration, SpecMetadata) {
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
  auto r = retrieval(RetrievalKind::hyde_rag, 3);
  const auto spec = create_experiment(kb, default_prompt(PromptName::opinion_based), r, "gpt-x", 0, ctx);
  const auto& m = spec.header.metadata;
  EXPECT_EQ(m.at("prompt_identifier"), "opinion_based_v1");
  EXPECT_EQ(m.at("retrieval_strategy"), "hyde_rag");
  EXPECT_EQ(m.at("k"), "3");
  EXPECT_EQ(m.at("model"), "gpt-x");
  EXPECT_EQ(m.at("experiment_type"), "leave_one_out");
  EXPECT_EQ(m.at("hyde_answer_count"), "3");
  EXPECT_NO_THROW(validate(spec));
}

TEST(Retrieval, MeanVectorExample) {
  const auto m = mean_vector({{1, 0}, {0, 1}, {1, 1}});
  EXPECT_EQ(m[0], 2.0 / 3.0);
  EXPECT_EQ(m[1], 2.0 / 3.0);
  EXPECT_THROW(mean_vector({}), Error);
  EXPECT_THROW(mean_vector({{1, 0}, {1}}), Error);
}

TEST(Retrieval, TopKTiesGoToLowerId) {
  const std::vector<Embedding> c = {{1, 0}, {1, 0}, {0, 1}, {2, 0}};
  EXPECT_EQ(top_k_by_cosine({1, 0}, c, {7, 3, 1, 5}, 3), (std::vector<std::size_t>{1, 3, 0}));
  EXPECT_EQ(top_k_by_cosine({1, 0}, {{0, 0}, {-1, 0}}, {1, 2}, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(Retrieval, HydeQueryVectorIsMeanOfAnswerEmbeddings) {
  Rig rig;
  const auto v = hyde_query_vector("why?", *rig.hyde, *rig.embedder, 3);
  std::vector<Embedding> parts;
  for (int i = 0; i < 3; ++i) parts.push_back(tiny_embedding("hypothesis " + std::to_string(i) + " for why?"));
  EXPECT_EQ(v, oracle_mean(parts));
  auto short_gen = callback_client([](const ChatRequest&) { return std::string(R"({"answers": ["one"]})"); });
  try {
    hyde_query_vector("why?", *short_gen, *rig.embedder, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shortfall);
  }
}

TEST(Retrieval, StrategiesMatchBruteForceOracle) {
  SeededRng rng(303);
  auto ctx = fixed_context();
  Rig rig;
  for (int trial = 0; trial < 150; ++trial) {
    const auto kb = random_kb(rng, 2 + rng.below(9), 3, ctx);
    const int k = 1 + static_cast<int>(rng.below(5));
    for (auto kind : {RetrievalKind::basic_rag, RetrievalKind::hyde_rag}) {
      auto cfg = retrieval(kind, k);
      auto strategy = make_strategy(cfg, rig.deps());
      for (const auto& p : kb.pairs) {
        const auto ctx_entries = build_context(kb, p.pair_id, p.question, *strategy);
        std::vector<int> got;
        for (const auto& e : ctx_entries) got.push_back(e.pair_id);
        Embedding query;
        if (kind == RetrievalKind::basic_rag) {
          query = tiny_embedding(p.question);
        } else {
          std::vector<Embedding> parts;
          for (int i = 0; i < 3; ++i) parts.push_back(tiny_embedding("hypothesis " + std::to_string(i) + " for " + p.question));
          query = oracle_mean(parts);
        }
        EXPECT_EQ(got, oracle_top_k(kb, p.pair_id, query, k));
      }
    }
  }
}

TEST(LeaveOneOut, HeldOutPairNeverInContext) {
  SeededRng rng(404);
  auto ctx = fixed_context();
  Rig rig;
  for (int trial = 0; trial < 40; ++trial) {
    const auto kb = random_kb(rng, 3 + rng.below(8), 3, ctx);
    for (auto kind : {RetrievalKind::direct, RetrievalKind::long_in_context, RetrievalKind::basic_rag,
                      RetrievalKind::hyde_rag}) {
      const auto spec = create_experiment(kb, default_prompt(PromptName::basic), retrieval(kind, 3), "m", 0, ctx);
      const auto out = run_experiment(spec, kb, nullptr, *rig.target, rig.deps(), ctx);
      ASSERT_EQ(out.responses.size(), kb.pairs.size());
      for (const auto& r : out.responses) {
        EXPECT_EQ(r.status, ResponseStatus::ok) << r.error;
        for (const auto& e : r.context_snapshot) EXPECT_NE(e.pair_id, r.question_id);
        if (kind == RetrievalKind::long_in_context) {
          EXPECT_EQ(r.context_snapshot.size(), kb.pairs.size() - 1);
        }
        if (kind == RetrievalKind::direct) {
          EXPECT_TRUE(r.context_snapshot.empty());
        }
      }
    }
  }
}

TEST(LeaveOneOut, BuildContextRejectsStrategyThatLeaks) {
  class Leaky : public ContextStrategy {
   public:
    explicit Leaky(const QASet& kb) : kb_(kb) {}
    std::string name() const override { return "leaky"; }
    std::vector<const QAPair*> select(const std::vector<const QAPair*>&, const std::string&) override {
      return {&kb_.pairs.front()};
    }
    const QASet& kb_;
  };
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
  Leaky leaky(kb);
  EXPECT_THROW(build_context(kb, 1, "q1", leaky), Error);
}

TEST(Rendering, UserMessageFormat) {
  std::vector<ContextEntry> c = {{1, 4, "Q four?", "A four."}, {2, 9, "Q nine?", "A nine."}};
  EXPECT_EQ(render_user_message("Why?", c),
            "Context:\n1. Q: Q four? A: A four.\n2. Q: Q nine? A: A nine.\n\nQuestion: Why?");
  EXPECT_EQ(render_user_message("Why?", {}), "Context:\n(no context provided)\n\nQuestion: Why?");
}

TEST(RunExperiment, CitationsErrorsAndMetadata) {
  auto ctx = fixed_context();
  auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}, {"q4", "a4"}}, ctx);
  kb.header.metadata["domain"] = "lib";
  auto target = callback_client([](const ChatRequest& r) -> std::string {
    if (r.user_message.find("Question: q1") != std::string::npos) return "It is so (2).";
    if (r.user_message.find("Question: q2") != std::string::npos) return "See (9).";
    if (r.user_message.find("Question: q3") != std::string::npos) return "Both (1) and (2).";
    throw Error(ErrorCode::provider, "target exploded");
  });
  const auto spec =
      create_experiment(kb, default_prompt(PromptName::basic), retrieval(RetrievalKind::long_in_context), "m", 0, ctx);
  const auto out = run_experiment(spec, kb, nullptr, *target, {}, ctx);
  ASSERT_EQ(out.responses.size(), 4u);
  EXPECT_EQ(out.responses[0].cited_context_index, 2);
  EXPECT_FALSE(out.responses[0].citation_error);
  EXPECT_FALSE(out.responses[1].cited_context_index);
  EXPECT_TRUE(out.responses[1].citation_error);
  EXPECT_TRUE(out.responses[2].citation_error);
  EXPECT_EQ(out.responses[3].status, ResponseStatus::error);
  EXPECT_NE(out.responses[3].error.find("target exploded"), std::string::npos);
  EXPECT_EQ(out.responses[0].expected_answer, "a1");
  EXPECT_EQ(out.responses[0].timestamp, kFixedTime);
  EXPECT_EQ(failure_count(out), 1u);
  EXPECT_EQ(out.header.metadata.at("failure_count"), "1");
  EXPECT_EQ(out.header.metadata.at("domain"), "lib");
  EXPECT_EQ(out.header.upstream_ids, (std::vector<std::string>{kb.header.artifact_id, spec.header.artifact_id}));
  try {
    enforce_failure_budget(out);  // 25% > 10%
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::run_failure);
  }
}

TEST(RunExperiment, FailureBudgetBoundary) {
  ExperimentOutput out;
  out.responses.resize(10);
  out.responses[0].status = ResponseStatus::error;
  EXPECT_NO_THROW(enforce_failure_budget(out));  // exactly 10%
  out.responses[1].status = ResponseStatus::error;
  EXPECT_THROW(enforce_failure_budget(out), Error);
}

TEST(RunExperiment, RagNeedsEmbeddings) {
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
  Rig rig;
  const auto spec =
      create_experiment(kb, default_prompt(PromptName::basic), retrieval(RetrievalKind::basic_rag), "m", 0, ctx);
  try {
    run_experiment(spec, kb, nullptr, *rig.target, rig.deps(), ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::embeddings_required);
  }
  EXPECT_THROW(make_strategy(retrieval(RetrievalKind::basic_rag), {}), Error);
}

TEST(RunExperiment, SyntheticQueriesUseWholeKb) {
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}}, ctx);
  QASet questions;
  questions.header = ctx.make_header(ArtifactKind::qa_set, {fake_id(3)}, {{"ground_truth", "absent"}});
  questions.pairs.push_back({1, "Unrelated question?", "", std::nullopt, std::nullopt});
  Rig rig;
  const auto spec = create_experiment(kb, default_prompt(PromptName::basic), retrieval(RetrievalKind::long_in_context),
                                      "m", 0, ctx, &questions);
  EXPECT_EQ(spec.type, ExperimentType::synthetic_queries);
  const auto out = run_experiment(spec, kb, &questions, *rig.target, {}, ctx);
  ASSERT_EQ(out.responses.size(), 1u);
  EXPECT_EQ(out.responses[0].context_snapshot.size(), 2u);
  EXPECT_EQ(out.header.metadata.at("ground_truth"), "absent");
  EXPECT_EQ(out.header.upstream_ids.front(), questions.header.artifact_id);
  EXPECT_THROW(run_experiment(spec, kb, nullptr, *rig.target, {}, ctx), Error);
}

TEST(Strategies, CustomRegistry) {
  register_strategy("last_two", [](const RetrievalConfig&, const RetrievalDeps&) {
    class LastTwo : public ContextStrategy {
     public:
      std::string name() const override { return "last_two"; }
      std::vector<const QAPair*> select(const std::vector<const QAPair*>& c, const std::string&) override {
        return {c.end() - std::min<std::size_t>(2, c.size()), c.end()};
      }
    };
    return std::make_unique<LastTwo>();
  });
  auto ctx = fixed_context();
  const auto kb = make_qa_set({{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}, {"q4", "a4"}}, ctx);
  RetrievalConfig cfg = retrieval(RetrievalKind::custom);
  cfg.custom_name = "last_two";
  auto s = make_strategy(cfg, {});
  const auto c = build_context(kb, 4, "q4", *s);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].pair_id, 2);
  EXPECT_EQ(c[1].context_index, 2);
  cfg.custom_name = "missing";
  EXPECT_THROW(make_strategy(cfg, {}), Error);
}
