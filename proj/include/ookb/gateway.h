// Chat-completion and embedding clients behind one interface. Every client
// enforces its config's in-flight bound and retry policy; providers only
// implement the raw call.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ookb/types.h"

namespace ookb {

enum class Provider { openai_compatible, gemini_compatible, mock };

std::string_view to_string(Provider provider);
Provider provider_from_string(std::string_view text);

struct RetryPolicy {
  int max_retries = 3;                              // after the first attempt
  std::chrono::milliseconds initial_backoff{1000};  // doubles each retry
};

/// Exact-match replies for the mock provider. A rule without `system` matches
/// any system prompt; rules are tried in order.
struct MockRule {
  std::optional<std::string> system;
  std::string user;
  std::string response;
};

struct MockScript {
  std::vector<MockRule> rules;
  // Used when no rule matches. "{user}" and "{system}" are substituted.
  std::optional<std::string> fallback;
  // Fixed vectors for specific texts; other texts use the hash embedder.
  std::map<std::string, Embedding> embeddings;
};

struct ClientConfig {
  Provider provider = Provider::mock;
  std::string base_url;
  std::string model = "mock-model";
  std::optional<std::string> embedding_model;
  std::string api_key_env;
  int max_inflight = 4;
  std::chrono::milliseconds timeout{60000};
  bool supports_search = false;
  RetryPolicy retry;
  std::uint64_t seed = 0;  // mock embedder seed
  MockScript mock;
};

void to_json(nlohmann::json& j, const ClientConfig& c);
void from_json(const nlohmann::json& j, ClientConfig& c);
void validate(const ClientConfig& config);

inline constexpr double kDefaultTemperature = 0.0;

struct ChatRequest {
  std::string system_prompt;
  std::string user_message;
  double temperature = kDefaultTemperature;
};

class LlmClient {
 public:
  explicit LlmClient(ClientConfig config);
  virtual ~LlmClient() = default;
  LlmClient(const LlmClient&) = delete;
  LlmClient& operator=(const LlmClient&) = delete;

  std::string chat(const ChatRequest& request);
  std::vector<Embedding> embed(const std::vector<std::string>& texts);

  const ClientConfig& config() const { return config_; }
  const std::string& model() const { return config_.model; }
  std::string embedding_model() const;

  // Sleep hook for retry backoff; tests replace it to avoid waiting.
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

 protected:
  virtual std::string do_chat(const ChatRequest& request) = 0;
  virtual std::vector<Embedding> do_embed(const std::vector<std::string>& texts) = 0;

 private:
  template <class F>
  auto with_retries(F&& call) -> decltype(call());
  void acquire_slot();
  void release_slot();

  ClientConfig config_;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int inflight_ = 0;
  std::function<void(std::chrono::milliseconds)> sleeper_;
};

/// Deterministic offline provider.
class MockClient : public LlmClient {
 public:
  explicit MockClient(ClientConfig config);

 protected:
  std::string do_chat(const ChatRequest& request) override;
  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;
};

/// Client backed by callables; used by tests and fixture generators.
class CallbackClient : public LlmClient {
 public:
  using ChatFn = std::function<std::string(const ChatRequest&)>;
  using EmbedFn = std::function<Embedding(const std::string&)>;

  CallbackClient(ClientConfig config, ChatFn chat, EmbedFn embed = nullptr);

 protected:
  std::string do_chat(const ChatRequest& request) override;
  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

 private:
  ChatFn chat_;
  EmbedFn embed_;
};

std::shared_ptr<LlmClient> make_client(const ClientConfig& config);

inline constexpr std::size_t kMockEmbeddingDim = 32;

/// Hash embedder: lowercase alphanumeric tokens, each mapped to a seeded
/// pseudo-random unit vector; the document vector is the normalized sum.
/// Text without tokens maps to the zero vector.
Embedding mock_embedding(std::string_view text, std::uint64_t seed);

/// Lowercased runs of ASCII alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace ookb
