#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ookb/concurrency.h"
#include "ookb/error.h"
#include "ookb/gateway.h"
#include "test_support.h"

using namespace ookb;
using namespace ookb::testing;
using nlohmann::json;

TEST(MockClient, ExactMatchRulesWithOptionalSystem) {
  ClientConfig c = mock_config();
  c.mock.rules = {{std::string("sys-a"), "hello", "from a"}, {std::nullopt, "hello", "any system"}};
  auto client = make_client(c);
  EXPECT_EQ(client->chat({"sys-a", "hello"}), "from a");
  EXPECT_EQ(client->chat({"sys-b", "hello"}), "any system");
  try {
    client->chat({"sys-a", "hello!"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::mock_miss);
    EXPECT_EQ(exit_code_for(e.category()), 3);
  }
}

TEST(MockClient, FallbackSubstitutesPlaceholders) {
  ClientConfig c = mock_config();
  c.mock.fallback = "echo {user} / {system}";
  auto client = make_client(c);
  EXPECT_EQ(client->chat({"S", "U"}), "echo U / S");
}

TEST(MockClient, ScriptShorthandInJson) {
  json j = {{"provider", "mock"}, {"model", "m"}, {"mock", {{"script", {{"ping", "pong"}}}}}};
  auto c = j.get<ClientConfig>();
  EXPECT_EQ(make_client(c)->chat({"", "ping"}), "pong");
  json back = c;
  EXPECT_EQ(back.at("mock").at("rules").at(0).at("response"), "pong");
}

TEST(MockEmbedding, FrozenValues) {
  // Reference values computed outside the library from the documented
  // construction (seeded FNV-1a token hash -> SplitMix stream -> unit vector).
  const auto e = mock_embedding("Alpha beta", 0);
  ASSERT_EQ(e.size(), kMockEmbeddingDim);
  EXPECT_NEAR(e[0], -0.008560383737, 1e-12);
  EXPECT_NEAR(e[1], 0.140432833713, 1e-12);
  EXPECT_NEAR(e[2], 0.317528001096, 1e-12);
  EXPECT_NEAR(e[3], 0.245166732442, 1e-12);
  const auto f = mock_embedding("alpha", 7);
  EXPECT_NEAR(f[0], 0.058470860029, 1e-12);
  EXPECT_NEAR(f[3], 0.146862822794, 1e-12);
}

TEST(MockEmbedding, UnitNormDeterministicAndZeroForNoTokens) {
  const auto e = mock_embedding("The quick brown fox", 3);
  double norm = 0;
  for (double x : e) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(e, mock_embedding("the QUICK brown fox!", 3));
  EXPECT_NE(e, mock_embedding("The quick brown fox", 4));
  const auto z = mock_embedding("  ...  ", 3);
  for (double x : z) EXPECT_EQ(x, 0.0);
}

TEST(MockClient, FixedEmbeddingsOverrideHash) {
  ClientConfig c = mock_config();
  c.mock.embeddings["pinned"] = {1.0, 0.0};
  c.mock.embeddings["other"] = {0.0, 1.0};
  auto client = make_client(c);
  const auto v = client->embed({"pinned", "other"});
  EXPECT_EQ(v[0], (Embedding{1.0, 0.0}));
  EXPECT_EQ(v[1], (Embedding{0.0, 1.0}));
  EXPECT_THROW(client->embed({}), Error);
}

TEST(Retry, TransientErrorsBackOffOneTwoFourSeconds) {
  ClientConfig c;  // default policy: 3 retries from 1s
  std::atomic<int> calls{0};
  auto client = std::make_shared<CallbackClient>(c, [&](const ChatRequest&) -> std::string {
    if (++calls < 4) throw Error(ErrorCode::server_error, "503");
    return "ok";
  });
  std::vector<long> waits;
  client->set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d.count()); });
  EXPECT_EQ(client->chat({"", "q"}), "ok");
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(waits, (std::vector<long>{1000, 2000, 4000}));
}

TEST(Retry, GivesUpAfterThreeRetries) {
  std::atomic<int> calls{0};
  auto client = callback_client([&](const ChatRequest&) -> std::string {
    ++calls;
    throw Error(ErrorCode::rate_limited, "429");
  });
  EXPECT_THROW(client->chat({"", "q"}), Error);
  EXPECT_EQ(calls, 4);
}

TEST(Retry, NonTransientErrorsAreNotRetried) {
  for (auto code : {ErrorCode::auth_failure, ErrorCode::provider, ErrorCode::mock_miss}) {
    std::atomic<int> calls{0};
    auto client = callback_client([&](const ChatRequest&) -> std::string {
      ++calls;
      throw Error(code, "nope");
    });
    EXPECT_THROW(client->chat({"", "q"}), Error);
    EXPECT_EQ(calls, 1) << to_string(code);
  }
}

TEST(Concurrency, InflightBoundIsRespected) {
  for (int bound : {1, 2, 3}) {
    ClientConfig c = mock_config();
    c.max_inflight = bound;
    std::atomic<int> current{0}, peak{0};
    auto client = callback_client(
        [&](const ChatRequest&) {
          const int now = ++current;
          int seen = peak.load();
          while (now > seen && !peak.compare_exchange_weak(seen, now)) {
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(5));
          --current;
          return std::string("ok");
        },
        nullptr, c);
    parallel_for(24, 8, [&](std::size_t) { client->chat({"", "q"}); });
    EXPECT_LE(peak, bound);
    EXPECT_EQ(peak, bound);
  }
}

TEST(Concurrency, ParallelForRethrowsFirstError) {
  std::atomic<int> ran{0};
  EXPECT_THROW(parallel_for(100, 4,
                            [&](std::size_t i) {
                              ++ran;
                              if (i == 3) throw Error(ErrorCode::provider, "boom");
                            }),
               Error);
  EXPECT_LE(ran, 100);
}

TEST(ClientConfig, ValidationAndRoundTrip) {
  ClientConfig c;
  c.provider = Provider::openai_compatible;
  EXPECT_THROW(validate(c), Error);
  c.base_url = "http://localhost:1/v1";
  c.api_key_env = "KEY";
  EXPECT_NO_THROW(validate(c));
  json j = c;
  EXPECT_EQ(j.at("provider"), "openai_compatible");
  EXPECT_EQ(j.get<ClientConfig>().base_url, c.base_url);
  EXPECT_THROW((json{{"provider", "mock"}, {"max_inflight", 0}}.get<ClientConfig>()), Error);
}

namespace {

// Local stand-in for a provider endpoint.
class FakeProvider {
 public:
  FakeProvider() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& prefix) const { return "http://127.0.0.1:" + std::to_string(port_) + prefix; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(HttpProviders, OpenAiWireFormatRetriesAndAuth) {
  ::setenv("OOKB_TEST_KEY", "sk-test", 1);
  FakeProvider fake;
  std::atomic<int> chat_calls{0};
  json last_body;
  std::mutex m;
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") != "Bearer sk-test") {
      res.status = 401;
      res.set_content(R"({"error":{"message":"bad key"}})", "application/json");
      return;
    }
    if (chat_calls++ == 0) {
      res.status = 503;
      return;
    }
    std::lock_guard lock(m);
    last_body = json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hi there"}}]})", "application/json");
  });
  fake.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json data = json::array();
    // Out of order on purpose; the client must place by index.
    for (int i = static_cast<int>(body.at("input").size()) - 1; i >= 0; --i) {
      data.push_back({{"index", i}, {"embedding", {double(i), 1.0}}});
    }
    res.set_content(json{{"data", data}, {"model", body.at("model")}}.dump(), "application/json");
  });

  ClientConfig c;
  c.provider = Provider::openai_compatible;
  c.base_url = fake.url("/v1");
  c.api_key_env = "OOKB_TEST_KEY";
  c.model = "gpt-test";
  c.embedding_model = "embed-test";
  auto client = make_client(c);
  std::vector<long> waits;
  client->set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d.count()); });

  EXPECT_EQ(client->chat({"be brief", "hello", 0.0}), "hi there");
  EXPECT_EQ(chat_calls, 2);
  EXPECT_EQ(waits, std::vector<long>{1000});
  EXPECT_EQ(last_body.at("model"), "gpt-test");
  EXPECT_EQ(last_body.at("temperature"), 0.0);
  EXPECT_EQ(last_body.at("messages").at(0).at("role"), "system");
  EXPECT_EQ(last_body.at("messages").at(0).at("content"), "be brief");
  EXPECT_EQ(last_body.at("messages").at(1).at("content"), "hello");

  const auto v = client->embed({"a", "b", "c"});
  EXPECT_EQ(v[2], (Embedding{2.0, 1.0}));

  ::setenv("OOKB_TEST_KEY", "wrong", 1);
  const int before = chat_calls;
  try {
    client->chat({"", "hello"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::auth_failure);
    EXPECT_NE(std::string(e.what()).find("bad key"), std::string::npos);
  }
  EXPECT_EQ(chat_calls, before);  // rejected before the handler counted, and not retried
  ::unsetenv("OOKB_TEST_KEY");
  try {
    client->chat({"", "hello"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::auth_config);
  }
}

TEST(HttpProviders, GeminiWireFormat) {
  ::setenv("OOKB_TEST_GKEY", "g-key", 1);
  FakeProvider fake;
  json chat_body;
  fake.server().Post(R"(/v1beta/models/gem-test:generateContent)",
                     [&](const httplib::Request& req, httplib::Response& res) {
                       if (req.get_header_value("x-goog-api-key") != "g-key") {
                         res.status = 403;
                         return;
                       }
                       chat_body = json::parse(req.body);
                       res.set_content(R"({"candidates":[{"content":{"parts":[{"text":"part one "},{"text":"two"}]}}]})",
                                       "application/json");
                     });
  fake.server().Post(R"(/v1beta/models/gem-embed:batchEmbedContents)",
                     [&](const httplib::Request& req, httplib::Response& res) {
                       const auto body = json::parse(req.body);
                       json out = json::array();
                       for (std::size_t i = 0; i < body.at("requests").size(); ++i) out.push_back({{"values", {0.5, double(i)}}});
                       res.set_content(json{{"embeddings", out}}.dump(), "application/json");
                     });
  ClientConfig c;
  c.provider = Provider::gemini_compatible;
  c.base_url = fake.url("/v1beta");
  c.api_key_env = "OOKB_TEST_GKEY";
  c.model = "gem-test";
  c.embedding_model = "gem-embed";
  auto client = make_client(c);
  EXPECT_EQ(client->chat({"sys", "user text", 0.2}), "part one two");
  EXPECT_EQ(chat_body.at("systemInstruction").at("parts").at(0).at("text"), "sys");
  EXPECT_EQ(chat_body.at("contents").at(0).at("parts").at(0).at("text"), "user text");
  EXPECT_DOUBLE_EQ(chat_body.at("generationConfig").at("temperature").get<double>(), 0.2);
  const auto v = client->embed({"x", "y"});
  EXPECT_EQ(v[1], (Embedding{0.5, 1.0}));
  ::unsetenv("OOKB_TEST_GKEY");
}

TEST(HttpProviders, TimeoutIsRetryable) {
  ::setenv("OOKB_TEST_KEY2", "k", 1);
  FakeProvider fake;
  std::atomic<int> calls{0};
  fake.server().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(R"({"choices":[{"message":{"content":"late"}}]})", "application/json");
  });
  ClientConfig c;
  c.provider = Provider::openai_compatible;
  c.base_url = fake.url("");
  c.api_key_env = "OOKB_TEST_KEY2";
  c.timeout = std::chrono::milliseconds(100);
  auto client = make_client(c);
  client->set_sleeper([](std::chrono::milliseconds) {});
  EXPECT_EQ(client->chat({"", "q"}), "late");
  EXPECT_GE(calls, 2);
  ::unsetenv("OOKB_TEST_KEY2");
}
