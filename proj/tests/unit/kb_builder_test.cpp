#include <gtest/gtest.h>

#include <atomic>
#include <regex>

#include <nlohmann/json.hpp>

#include "ookb/error.h"
#include "ookb/kb_builder.h"
#include "ookb/prompts.h"
#include "test_support.h"

using namespace ookb;
using namespace ookb::testing;
using nlohmann::json;

namespace {

std::vector<std::string> texts(const std::vector<Sentence>& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(x.text);
  return out;
}

// Responds to a numbered batch with one fact per sentence, copying the text.
std::string echo_facts(const ChatRequest& r) {
  json facts = json::array();
  std::istringstream in(r.user_message);
  std::string line;
  std::smatch m;
  static const std::regex numbered(R"(^(\d+)\. (.*)$)");
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, numbered)) facts.push_back({{"fact", m[2].str()}, {"source", std::stoi(m[1].str())}});
  }
  return json{{"facts", facts}}.dump();
}

}  // namespace

TEST(Segmentation, BasicTerminators) {
  const auto s = segment_sentences("It rains. Does it snow? Yes! 42 days remain.");
  EXPECT_EQ(texts(s), (std::vector<std::string>{"It rains.", "Does it snow?", "Yes!", "42 days remain."}));
  EXPECT_EQ(s.front().index, 1);
  EXPECT_EQ(s.back().index, 4);
}

TEST(Segmentation, AbbreviationsDoNotSplit) {
  const auto s = segment_sentences("Dr. Smith met Mr. Jones at St. Mary. They talked, e.g. About rent.");
  EXPECT_EQ(texts(s), (std::vector<std::string>{"Dr. Smith met Mr. Jones at St. Mary.", "They talked, e.g. About rent."}));
}

TEST(Segmentation, ClosingQuotesAndLowercaseContinuations) {
  const auto s = segment_sentences("He said \"stop.\" Then left. version 2.5 is out. a lowercase start stays.");
  EXPECT_EQ(texts(s), (std::vector<std::string>{"He said \"stop.\"", "Then left. version 2.5 is out. a lowercase start stays."}));
}

TEST(Segmentation, TrailingTextWithoutPunctuationAndEmpty) {
  EXPECT_EQ(texts(segment_sentences("One. Two without end")), (std::vector<std::string>{"One.", "Two without end"}));
  EXPECT_TRUE(segment_sentences("   ").empty());
}

TEST(Segmentation, PropertySentencesReconstructBody) {
  SeededRng rng(17);
  const std::vector<std::string> words = {"Fee", "loan", "Dr.", "rooms", "e.g.", "Books", "3.5", "day.", "Yes?", "no!"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string body;
    const auto n = 1 + rng.below(25);
    for (std::size_t i = 0; i < n; ++i) body += words[rng.below(words.size())] + (rng.below(4) ? " " : "  ");
    auto ctx = fixed_context();
    const auto doc = make_source_document("t", body, ctx);
    EXPECT_NO_THROW(validate(doc)) << body;
  }
}

TEST(FactExtraction, BatchesAndGrounds) {
  auto ctx = fixed_context();
  std::string body;
  for (int i = 1; i <= 7; ++i) body += "Sentence number " + std::to_string(i) + " is here. ";
  const auto doc = make_source_document("d", body, ctx, {{"domain", "test"}});
  std::atomic<int> calls{0};
  auto client = callback_client([&](const ChatRequest& r) {
    ++calls;
    EXPECT_NE(r.system_prompt.find(prompts::fact_extraction_format()), std::string::npos);
    return echo_facts(r);
  });
  FactExtractionConfig cfg;
  cfg.batch_size = 3;
  const auto facts = extract_facts(doc, cfg, *client, ctx);
  EXPECT_EQ(calls, 3);
  ASSERT_EQ(facts.facts.size(), 7u);
  for (int i = 0; i < 7; ++i) {
    EXPECT_EQ(facts.facts[i].fact_id, i + 1);
    EXPECT_EQ(facts.facts[i].source_sentence, i + 1);
  }
  EXPECT_EQ(facts.header.upstream_ids, std::vector<std::string>{doc.header.artifact_id});
  EXPECT_EQ(facts.header.metadata.at("prompt_identifier"), "fact_extraction_v1");
  EXPECT_EQ(facts.header.metadata.at("batch_size"), "3");
  EXPECT_EQ(facts.header.metadata.at("domain"), "test");
}

TEST(FactExtraction, RenderBatchNumbersSentences) {
  EXPECT_EQ(render_fact_batch({{4, "A."}, {5, "B."}}), "4. A.\n5. B.");
}

TEST(FactExtraction, AcceptsAlternateShapes) {
  auto ctx = fixed_context();
  const auto doc = make_source_document("d", "Alpha is first. Beta is second.", ctx);
  auto client = callback_client([](const ChatRequest&) {
    return std::string("```json\n[{\"text\": \"Alpha is first.\", \"source_sentence\": \"1\"},"
                       " {\"fact\": \"Beta is second.\", \"sentence\": [2]}]\n```");
  });
  const auto facts = extract_facts(doc, {}, *client, ctx);
  ASSERT_EQ(facts.facts.size(), 2u);
  EXPECT_EQ(facts.facts[1].source_sentence, 2);
}

TEST(FactExtraction, UngroundedFactsAreRejectedWithDetails) {
  auto ctx = fixed_context();
  const auto doc = make_source_document("d", "Only one sentence.", ctx);
  auto client = callback_client([](const ChatRequest&) {
    return std::string(R"({"facts":[{"fact":"ok","source":1},{"fact":"invented claim","source":7},{"fact":"loose"}]})");
  });
  try {
    extract_facts(doc, {}, *client, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::grounding);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("invented claim"), std::string::npos);
    EXPECT_NE(msg.find("sentence 7"), std::string::npos);
    EXPECT_NE(msg.find("loose"), std::string::npos);
  }
}

TEST(FactExtraction, EmptyAndMalformedReplies) {
  auto ctx = fixed_context();
  const auto doc = make_source_document("d", "Only one sentence.", ctx);
  auto empty = callback_client([](const ChatRequest&) { return std::string(R"({"facts": []})"); });
  try {
    extract_facts(doc, {}, *empty, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_extraction);
  }
  auto prose = callback_client([](const ChatRequest&) { return std::string("I cannot do that."); });
  try {
    extract_facts(doc, {}, *prose, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::generation_parse);
  }
}

TEST(FactExtraction, CustomPromptKeepsFormatSuffix) {
  FactExtractionConfig cfg;
  cfg.prompt_text = "Extract facts about trains.";
  EXPECT_EQ(cfg.effective_prompt(), "Extract facts about trains." + prompts::fact_extraction_format());
  cfg.prompt_text.clear();
  EXPECT_EQ(cfg.effective_prompt(), std::string(prompts::fact_extraction()) + prompts::fact_extraction_format());
}

TEST(QAGeneration, OnePairPerFactOrderedByFactId) {
  auto ctx = fixed_context();
  FactList facts;
  facts.header = ctx.make_header(ArtifactKind::fact_list, {fake_id(1)}, {{"domain", "d"}});
  for (int i = 1; i <= 6; ++i) facts.facts.push_back({i, "fact " + std::to_string(i), 1});
  auto client = callback_client([](const ChatRequest& r) {
    return json{{"question", "What about " + r.user_message + "?"}, {"answer", r.user_message}}.dump();
  });
  const auto set = generate_qa_set(facts, {}, *client, ctx);
  ASSERT_EQ(set.pairs.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(set.pairs[i].pair_id, i + 1);
    EXPECT_EQ(set.pairs[i].source_fact_id, i + 1);
    EXPECT_EQ(set.pairs[i].answer, "fact " + std::to_string(i + 1));
  }
  EXPECT_EQ(set.header.metadata.at("stage"), "generated");
  EXPECT_EQ(set.header.metadata.at("domain"), "d");
  EXPECT_NO_THROW(validate(set));
}

TEST(QAGeneration, ParseAndEmptyFieldErrors) {
  const AtomicFact fact{1, "x", 1};
  auto missing = callback_client([](const ChatRequest&) { return std::string(R"({"question": "q"})"); });
  try {
    generate_qa(fact, {}, *missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::generation_parse);
  }
  auto blank = callback_client([](const ChatRequest&) { return std::string(R"({"question": "q", "answer": "  "})"); });
  try {
    generate_qa(fact, {}, *blank);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_field);
  }
}

TEST(SyntheticQueries, ExactCountAndShortfall) {
  auto client = callback_client([](const ChatRequest& r) {
    EXPECT_EQ(r.user_message, "Topic: parking\nNumber of questions: 2");
    return std::string(R"({"questions": ["Where can I park?", "Is parking free?", "extra"]})");
  });
  EXPECT_EQ(generate_synthetic_queries("parking", 2, *client),
            (std::vector<std::string>{"Where can I park?", "Is parking free?"}));
  auto few = callback_client([](const ChatRequest&) { return std::string(R"(["only one"])"); });
  try {
    generate_synthetic_queries("parking", 2, *few);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shortfall);
  }
  EXPECT_THROW(generate_synthetic_queries("parking", 0, *few), Error);
}

TEST(SyntheticQueries, SetIsMarkedWithoutGroundTruth) {
  auto ctx = fixed_context();
  const auto topic = make_source_document("topic", "parking", ctx);
  const auto set = make_synthetic_query_set({"a?", "b?"}, topic, "m", ctx);
  EXPECT_TRUE(set.ground_truth_absent());
  EXPECT_EQ(set.pairs[1].pair_id, 2);
  EXPECT_FALSE(set.pairs[0].source_fact_id);
  EXPECT_NO_THROW(validate(set));
}

TEST(Faq, IngestBypassesTheModel) {
  TempDir dir;
  write_text(dir / "faq.jsonl",
             "{\"question\": \"When do you open?\", \"answer\": \"At nine.\"}\n\n"
             "{\"question\": \"Is there wifi?\", \"answer\": \"Yes, free.\"}\n");
  const auto entries = read_faq_jsonl(dir / "faq.jsonl");
  ASSERT_EQ(entries.size(), 2u);
  auto ctx = fixed_context();
  const auto ingest = ingest_faq(entries, "faq", ctx, {{"domain", "faq"}});
  EXPECT_EQ(ingest.qa_set.pairs[1].question, "Is there wifi?");
  EXPECT_EQ(ingest.qa_set.pairs[1].source_fact_id, 2);
  EXPECT_EQ(ingest.facts.facts[0].source_sentence, 1);
  EXPECT_EQ(ingest.qa_set.header.metadata.at("prompt_identifier"), "direct_faq");
  EXPECT_EQ(ingest.qa_set.header.metadata.at("domain"), "faq");
  ArtifactStore store(dir / "store");
  store.save(ingest.document);
  store.save(ingest.facts);
  store.save(ingest.qa_set);
  EXPECT_EQ(store.trace_lineage(ingest.qa_set.header.artifact_id).chain.size(), 3u);

  write_text(dir / "bad.jsonl", "{\"question\": \"q\"}\n");
  try {
    read_faq_jsonl(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos);
  }
}

TEST(PairEmbeddingText, Format) {
  QAPair p;
  p.question = "Q1";
  p.answer = "A1";
  EXPECT_EQ(pair_embedding_text(p), "Q: Q1\nA: A1");
}
