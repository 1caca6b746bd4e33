#include "ookb/gateway.h"

#include <cctype>
#include <cmath>
#include <thread>

#include "http_clients.h"
#include "ookb/error.h"
#include "ookb/hashing.h"

namespace ookb {

using nlohmann::json;

std::string_view to_string(Provider provider) {
  switch (provider) {
    case Provider::openai_compatible: return "openai_compatible";
    case Provider::gemini_compatible: return "gemini_compatible";
    case Provider::mock: return "mock";
  }
  return "mock";
}

Provider provider_from_string(std::string_view text) {
  for (auto p : {Provider::openai_compatible, Provider::gemini_compatible, Provider::mock}) {
    if (to_string(p) == text) return p;
  }
  throw Error(ErrorCode::invalid_config, "unknown provider '" + std::string(text) + "'");
}

void to_json(json& j, const ClientConfig& c) {
  json rules = json::array();
  for (const auto& r : c.mock.rules) {
    json rule = {{"user", r.user}, {"response", r.response}};
    if (r.system) rule["system"] = *r.system;
    rules.push_back(std::move(rule));
  }
  j = json{{"provider", to_string(c.provider)},
           {"base_url", c.base_url},
           {"model", c.model},
           {"api_key_env", c.api_key_env},
           {"max_inflight", c.max_inflight},
           {"timeout_ms", c.timeout.count()},
           {"supports_search", c.supports_search},
           {"max_retries", c.retry.max_retries},
           {"initial_backoff_ms", c.retry.initial_backoff.count()},
           {"seed", c.seed}};
  if (c.embedding_model) j["embedding_model"] = *c.embedding_model;
  if (c.provider == Provider::mock) {
    j["mock"] = {{"rules", rules}, {"embeddings", c.mock.embeddings}};
    if (c.mock.fallback) j["mock"]["fallback"] = *c.mock.fallback;
  }
}

void from_json(const json& j, ClientConfig& c) {
  try {
    c.provider = provider_from_string(j.value("provider", std::string("mock")));
    c.base_url = j.value("base_url", std::string());
    c.model = j.value("model", std::string("mock-model"));
    if (j.contains("embedding_model")) c.embedding_model = j.at("embedding_model").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string());
    c.max_inflight = j.value("max_inflight", 4);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    c.supports_search = j.value("supports_search", false);
    c.retry.max_retries = j.value("max_retries", 3);
    c.retry.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 1000));
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("mock")) {
      const auto& m = j.at("mock");
      if (m.contains("rules")) {
        for (const auto& r : m.at("rules")) {
          MockRule rule;
          if (r.contains("system")) rule.system = r.at("system").get<std::string>();
          r.at("user").get_to(rule.user);
          r.at("response").get_to(rule.response);
          c.mock.rules.push_back(std::move(rule));
        }
      }
      // Shorthand: {"script": {"user message": "reply", ...}}
      if (m.contains("script")) {
        for (const auto& [user, reply] : m.at("script").items()) {
          c.mock.rules.push_back({std::nullopt, user, reply.get<std::string>()});
        }
      }
      if (m.contains("fallback")) c.mock.fallback = m.at("fallback").get<std::string>();
      if (m.contains("embeddings")) m.at("embeddings").get_to(c.mock.embeddings);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("client config: ") + e.what());
  }
  validate(c);
}

void validate(const ClientConfig& config) {
  if (config.max_inflight < 1) throw Error(ErrorCode::invalid_config, "max_inflight must be >= 1");
  if (config.retry.max_retries < 0) throw Error(ErrorCode::invalid_config, "max_retries must be >= 0");
  if (config.model.empty()) throw Error(ErrorCode::invalid_config, "model must not be empty");
  if (config.provider != Provider::mock) {
    if (config.base_url.empty()) throw Error(ErrorCode::invalid_config, "base_url required for " + std::string(to_string(config.provider)));
    if (config.api_key_env.empty()) throw Error(ErrorCode::invalid_config, "api_key_env required for " + std::string(to_string(config.provider)));
  }
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(ClientConfig config)
    : config_(std::move(config)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  validate(config_);
}

std::string LlmClient::embedding_model() const {
  return config_.embedding_model.value_or(config_.model);
}

void LlmClient::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  sleeper_ = std::move(sleeper);
}

void LlmClient::acquire_slot() {
  std::unique_lock lock(slot_mutex_);
  slot_cv_.wait(lock, [this] { return inflight_ < config_.max_inflight; });
  ++inflight_;
}

void LlmClient::release_slot() {
  {
    std::lock_guard lock(slot_mutex_);
    --inflight_;
  }
  slot_cv_.notify_one();
}

template <class F>
auto LlmClient::with_retries(F&& call) -> decltype(call()) {
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    acquire_slot();
    try {
      auto result = call();
      release_slot();
      return result;
    } catch (const Error& e) {
      release_slot();
      if (!e.retryable() || attempt >= config_.retry.max_retries) throw;
    } catch (...) {
      release_slot();
      throw;
    }
    sleeper_(backoff);
    backoff *= 2;
  }
}

std::string LlmClient::chat(const ChatRequest& request) {
  if (request.user_message.empty()) throw Error(ErrorCode::precondition, "user_message must not be empty");
  if (request.temperature < 0) throw Error(ErrorCode::precondition, "temperature must be >= 0");
  return with_retries([&] { return do_chat(request); });
}

std::vector<Embedding> LlmClient::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorCode::precondition, "embed requires at least one text");
  auto vectors = with_retries([&] { return do_embed(texts); });
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::provider, "embedding count " + std::to_string(vectors.size()) +
                                         " does not match input count " + std::to_string(texts.size()));
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw Error(ErrorCode::dimension_mismatch, "provider returned embeddings of differing dimension");
    }
  }
  return vectors;
}

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Embedding mock_embedding(std::string_view text, std::uint64_t seed) {
  Embedding sum(kMockEmbeddingDim, 0.0);
  for (const auto& token : tokenize(text)) {
    std::uint64_t state = hash64(token, seed);
    Embedding v(kMockEmbeddingDim);
    double norm = 0.0;
    for (auto& x : v) {
      // 53 high bits -> [0,1) -> [-1,1)
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < kMockEmbeddingDim; ++i) sum[i] += v[i] / norm;
  }
  double norm = 0.0;
  for (double x : sum) norm += x * x;
  if (norm == 0.0) return sum;
  norm = std::sqrt(norm);
  for (auto& x : sum) x /= norm;
  return sum;
}

MockClient::MockClient(ClientConfig config) : LlmClient(std::move(config)) {}

namespace {

std::string substitute(std::string text, std::string_view key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

}  // namespace

std::string MockClient::do_chat(const ChatRequest& request) {
  for (const auto& rule : config().mock.rules) {
    if (rule.user == request.user_message && (!rule.system || *rule.system == request.system_prompt)) {
      return rule.response;
    }
  }
  if (config().mock.fallback) {
    return substitute(substitute(*config().mock.fallback, "{user}", request.user_message), "{system}",
                      request.system_prompt);
  }
  std::string preview = request.user_message.substr(0, 80);
  throw Error(ErrorCode::mock_miss, "no scripted reply for user message \"" + preview + "\"");
}

std::vector<Embedding> MockClient::do_embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = config().mock.embeddings.find(t);
    out.push_back(it != config().mock.embeddings.end() ? it->second : mock_embedding(t, config().seed));
  }
  return out;
}

CallbackClient::CallbackClient(ClientConfig config, ChatFn chat, EmbedFn embed)
    : LlmClient(std::move(config)), chat_(std::move(chat)), embed_(std::move(embed)) {}

std::string CallbackClient::do_chat(const ChatRequest& request) {
  if (!chat_) throw Error(ErrorCode::provider, "client has no chat handler");
  return chat_(request);
}

std::vector<Embedding> CallbackClient::do_embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_ ? embed_(t) : mock_embedding(t, config().seed));
  return out;
}

std::shared_ptr<LlmClient> make_client(const ClientConfig& config) {
  switch (config.provider) {
    case Provider::mock: return std::make_shared<MockClient>(config);
    case Provider::openai_compatible: return make_openai_client(config);
    case Provider::gemini_compatible: return make_gemini_client(config);
  }
  throw Error(ErrorCode::invalid_config, "unknown provider");
}

}  // namespace ookb
