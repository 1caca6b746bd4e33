// HTTP providers. Only extracted text and vectors leave this file; raw
// payloads are never persisted.
#include "http_clients.h"

#include <cstdlib>

#include <httplib.h>

#include "ookb/error.h"

namespace ookb {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::invalid_config, "base_url must include a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = base_url.substr(0, path_start);
  ep.path_prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

std::string provider_message(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (j.contains("error")) {
      const auto& e = j["error"];
      if (e.is_object() && e.contains("message")) return e["message"].get<std::string>();
      return e.dump();
    }
  } catch (const json::exception&) {
  }
  return body.substr(0, 200);
}

class HttpClientBase : public LlmClient {
 public:
  explicit HttpClientBase(ClientConfig config)
      : LlmClient(std::move(config)), endpoint_(split_base_url(this->config().base_url)) {}

 protected:
  std::string api_key() const {
    const char* key = std::getenv(config().api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::auth_config,
                  "environment variable " + config().api_key_env + " is not set");
    }
    return key;
  }

  json post(const std::string& path, const json& body, const httplib::Headers& headers) {
    httplib::Client http(endpoint_.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config().timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config().timeout - secs);
    http.set_connection_timeout(secs.count(), usecs.count());
    http.set_read_timeout(secs.count(), usecs.count());
    http.set_write_timeout(secs.count(), usecs.count());

    auto res = http.Post(endpoint_.path_prefix + path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const std::string what = httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::Write ||
          err == httplib::Error::ConnectionTimeout) {
        throw Error(ErrorCode::timeout, what);
      }
      throw Error(ErrorCode::provider, "request failed: " + what);
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw Error(ErrorCode::auth_failure, provider_message(res->body));
    }
    if (status == 429) throw Error(ErrorCode::rate_limited, provider_message(res->body));
    if (status >= 500) {
      throw Error(ErrorCode::server_error, std::to_string(status) + ": " + provider_message(res->body));
    }
    if (status < 200 || status >= 300) {
      throw Error(ErrorCode::provider, std::to_string(status) + ": " + provider_message(res->body));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::provider, std::string("malformed response body: ") + e.what());
    }
  }

 private:
  Endpoint endpoint_;
};

class OpenAiCompatibleClient final : public HttpClientBase {
 public:
  using HttpClientBase::HttpClientBase;

 protected:
  std::string do_chat(const ChatRequest& request) override {
    const auto key = api_key();
    json body = {{"model", config().model},
                 {"temperature", request.temperature},
                 {"messages", json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                           {{"role", "user"}, {"content", request.user_message}}})}};
    const json reply = post("/chat/completions", body, {{"Authorization", "Bearer " + key}});
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::provider, std::string("unexpected chat payload: ") + e.what());
    }
  }

  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override {
    const auto key = api_key();
    json body = {{"model", embedding_model()}, {"input", texts}};
    const json reply = post("/embeddings", body, {{"Authorization", "Bearer " + key}});
    try {
      std::vector<Embedding> out(texts.size());
      for (const auto& item : reply.at("data")) {
        const auto index = item.at("index").get<std::size_t>();
        if (index >= out.size()) throw Error(ErrorCode::provider, "embedding index out of range");
        item.at("embedding").get_to(out[index]);
      }
      return out;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::provider, std::string("unexpected embedding payload: ") + e.what());
    }
  }
};

class GeminiCompatibleClient final : public HttpClientBase {
 public:
  using HttpClientBase::HttpClientBase;

 protected:
  std::string do_chat(const ChatRequest& request) override {
    const auto key = api_key();
    json body = {
        {"systemInstruction", {{"parts", json::array({{{"text", request.system_prompt}}})}}},
        {"contents", json::array({{{"role", "user"},
                                   {"parts", json::array({{{"text", request.user_message}}})}}})},
        {"generationConfig", {{"temperature", request.temperature}}}};
    const json reply = post("/models/" + config().model + ":generateContent", body, {{"x-goog-api-key", key}});
    try {
      std::string text;
      for (const auto& part : reply.at("candidates").at(0).at("content").at("parts")) {
        if (part.contains("text")) text += part.at("text").get<std::string>();
      }
      return text;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::provider, std::string("unexpected chat payload: ") + e.what());
    }
  }

  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override {
    const auto key = api_key();
    const std::string model = "models/" + embedding_model();
    json requests = json::array();
    for (const auto& t : texts) {
      requests.push_back({{"model", model}, {"content", {{"parts", json::array({{{"text", t}}})}}}});
    }
    const json reply = post("/" + model + ":batchEmbedContents", {{"requests", requests}}, {{"x-goog-api-key", key}});
    try {
      std::vector<Embedding> out;
      for (const auto& e : reply.at("embeddings")) out.push_back(e.at("values").get<Embedding>());
      return out;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::provider, std::string("unexpected embedding payload: ") + e.what());
    }
  }
};

}  // namespace

std::shared_ptr<LlmClient> make_openai_client(const ClientConfig& config) {
  return std::make_shared<OpenAiCompatibleClient>(config);
}

std::shared_ptr<LlmClient> make_gemini_client(const ClientConfig& config) {
  return std::make_shared<GeminiCompatibleClient>(config);
}

}  // namespace ookb
