// Regenerates data/demo/config.json: runs the pipeline over the demo document
// with rule-based responders, records every (user message -> reply) pair and
// writes them out as mock rules for a single offline client.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ookb/error.h"
#include "ookb/experiment.h"
#include "ookb/gateway.h"
#include "ookb/pipeline.h"
#include "ookb/prompts.h"

using namespace ookb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kStopwords = {"a",   "an",  "and", "are", "as",   "at",   "be",  "by",   "can",
                                          "does", "for", "how", "in",  "is",   "it",   "may", "of",   "on",
                                          "or",  "per", "the", "that", "to",  "true", "up",  "what", "with"};

std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> out;
  for (auto& t : tokenize(text)) {
    if (!kStopwords.count(t)) out.insert(t);
  }
  return out;
}

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& w : a) n += b.count(w);
  return n;
}

std::string after(const std::string& text, const std::string& marker) {
  const auto pos = text.find(marker);
  return pos == std::string::npos ? std::string() : text.substr(pos + marker.size());
}

std::string before(const std::string& text, const std::string& marker) {
  const auto pos = text.find(marker);
  return pos == std::string::npos ? text : text.substr(0, pos);
}

std::string strip_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string extract_facts_reply(const std::string& user) {
  json facts = json::array();
  std::istringstream in(user);
  std::string line;
  static const std::regex numbered(R"(^(\d+)\. (.*)$)");
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, numbered)) facts.push_back({{"fact", m[2].str()}, {"source", std::stoi(m[1].str())}});
  }
  return json{{"facts", facts}}.dump();
}

std::string qa_reply(const std::string& fact) {
  std::string body = strip_period(fact);
  if (!body.empty()) body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
  return json{{"question", "Is it true that " + body + "?"}, {"answer", fact}}.dump();
}

std::string hyde_reply(const std::string& system, const std::string& question) {
  static const std::regex count_re(R"(containing exactly (\d+) answers)");
  std::smatch m;
  int n = std::regex_search(system, m, count_re) ? std::stoi(m[1].str()) : 3;
  static const char* openers[] = {"Yes, ", "Probably, ", "It seems that "};
  json answers = json::array();
  const std::string body = strip_period(after(question, "Is it true that "));
  for (int i = 0; i < n; ++i) answers.push_back(openers[i % 3] + (body.empty() ? question : body) + ".");
  return json{{"answers", answers}}.dump();
}

// Answers from the context entry sharing the most content words with the
// question. The conservative prompt needs two shared words, the others one.
std::string target_reply(const std::string& system, const std::string& user) {
  const std::size_t needed = system == prompts::system_conservative() ? 2 : 1;
  const std::string question = after(user, "\n\nQuestion: ");
  const std::string context = before(after(user, "Context:\n"), "\n\nQuestion: ");
  const auto qwords = content_words(question);
  static const std::regex entry(R"(^(\d+)\. Q: (.*) A: (.*)$)");
  std::istringstream in(context);
  std::string line, best_answer;
  int best_index = 0;
  std::size_t best = 0;
  std::smatch m;
  while (std::getline(in, line)) {
    if (!std::regex_match(line, m, entry)) continue;
    const auto score = overlap(qwords, content_words(m[2].str() + " " + m[3].str()));
    if (score > best) {
      best = score;
      best_index = std::stoi(m[1].str());
      best_answer = m[3].str();
    }
  }
  if (best < needed) return "I don't know. No citation.";
  return strip_period(best_answer) + ", as stated in fact (" + std::to_string(best_index) + ").";
}

std::string abstention_reply(const std::string& user) {
  const std::string answer = after(user, "Model Answer: ");
  const bool abstained = answer.find("don't know") != std::string::npos;
  return std::string("The answer ") + (abstained ? "declines to answer" : "gives a direct answer") +
         ".\n<abstention>" + (abstained ? "Yes" : "No") + "</abstention>";
}

std::string factuality_reply(const std::string& user) {
  const std::string answer = before(after(user, "Model Answer: "), "\n\nExpected Answer: ");
  const auto expected = content_words(after(user, "\n\nExpected Answer: "));
  const double ratio = expected.empty() ? 0.0 : double(overlap(expected, content_words(answer))) / expected.size();
  const char* tier = ratio >= 0.8 ? "tier_1" : ratio >= 0.4 ? "tier_2" : "tier_3";
  return "Compared the key terms of both answers.\n<factuality>" + std::string(tier) + "</factuality>";
}

std::string respond(const ChatRequest& r) {
  const auto& s = r.system_prompt;
  if (s.find(prompts::fact_extraction_format()) != std::string::npos) return extract_facts_reply(r.user_message);
  if (s.find(prompts::qa_generation_format()) != std::string::npos) return qa_reply(r.user_message);
  if (s.find("{\"answers\"") != std::string::npos) return hyde_reply(s, r.user_message);
  if (s.find("<abstention>") != std::string::npos) return abstention_reply(r.user_message);
  if (s.find("<factuality>") != std::string::npos) return factuality_reply(r.user_message);
  return target_reply(s, r.user_message);
}

bool is_target(const ChatRequest& r) { return r.user_message.rfind("Context:\n", 0) == 0; }

class Recorder {
 public:
  using Key = std::pair<std::optional<std::string>, std::string>;

  std::string record(const ChatRequest& r) {
    std::string reply = respond(r);
    std::lock_guard lock(mutex_);
    Key key{is_target(r) ? std::optional(r.system_prompt) : std::nullopt, r.user_message};
    auto [it, inserted] = replies_.emplace(std::move(key), reply);
    if (!inserted && it->second != reply) {
      throw Error(ErrorCode::precondition, "two different replies for one user message");
    }
    return reply;
  }
  const std::map<Key, std::string>& replies() const { return replies_; }

 private:
  std::mutex mutex_;
  std::map<Key, std::string> replies_;
};

PipelineConfig base_config(const fs::path& store) {
  PipelineConfig config;
  ClientConfig client;
  client.model = "demo-model";
  client.embedding_model = "demo-embedding";
  client.seed = 7;
  config.clients["demo"] = client;
  for (const char* role : kRoles) config.roles[role] = "demo";
  config.store_root = store;
  config.seed = 42;
  config.fixed_clock = "2026-01-01T00:00:00Z";
  config.defaults.domain = "library policy";
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the offline demo config"};
  std::string source = "data/demo/policy.txt", out = "data/demo/config.json", work;
  app.add_option("--source", source, "Demo document");
  app.add_option("--out", out, "Config file to write");
  app.add_option("--work-dir", work, "Scratch store directory (default: a temp dir)");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path scratch = work.empty() ? fs::temp_directory_path() / ("ookb-demo-" + std::to_string(::getpid())) : fs::path(work);
    fs::remove_all(scratch);

    Recorder recorder;
    ClientFactory recording = [&](const std::string&, const ClientConfig& cfg) {
      return std::make_shared<CallbackClient>(cfg, [&](const ChatRequest& r) { return recorder.record(r); });
    };
    PipelineConfig config = base_config(scratch / "record");
    for (const auto& [prompt, strategy] : valid_combinations()) {
      PipelineChoices choices;
      choices.prompt = prompt;
      choices.strategy = strategy;
      run_pipeline(config, source, choices, recording);
    }

    PipelineConfig final_config = base_config("ookb-store");
    auto& demo = final_config.clients["demo"];
    for (const auto& [key, reply] : recorder.replies()) demo.mock.rules.push_back({key.first, key.second, reply});

    // Replay through the plain mock client to prove the rules are complete.
    PipelineConfig replay = final_config;
    replay.store_root = scratch / "replay";
    for (const auto& [prompt, strategy] : valid_combinations()) {
      PipelineChoices choices;
      choices.prompt = prompt;
      choices.strategy = strategy;
      run_pipeline(replay, source, choices);
    }
    fs::remove_all(scratch);

    std::ofstream file(out, std::ios::binary | std::ios::trunc);
    file << to_json(final_config).dump(2) << '\n';
    if (!file) throw Error(ErrorCode::storage, "cannot write " + out);
    std::cout << "wrote " << out << " with " << demo.mock.rules.size() << " scripted replies\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.category());
  }
  return 0;
}
