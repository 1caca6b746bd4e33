#include "ookb/pipeline.h"

#include <fstream>
#include <sstream>

#include "ookb/error.h"
#include "ookb/evaluation.h"
#include "ookb/experiment.h"
#include "ookb/hashing.h"
#include "ookb/kb_builder.h"

namespace ookb {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::invalid_config, "config must be a JSON object");
    if (j.contains("store_root")) {
      fs::path root = j.at("store_root").get<std::string>();
      c.store_root = root.is_relative() && !base_dir.empty() ? base_dir / root : root;
    }
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("fixed_clock") && !j.at("fixed_clock").is_null()) {
      c.fixed_clock = j.at("fixed_clock").get<std::string>();
      parse_timestamp(*c.fixed_clock);
    }
    if (j.contains("clients")) {
      for (const auto& [name, cfg] : j.at("clients").items()) c.clients[name] = cfg.get<ClientConfig>();
    }
    if (j.contains("roles")) j.at("roles").get_to(c.roles);
    if (j.contains("defaults")) {
      const auto& d = j.at("defaults");
      auto& out = c.defaults;
      if (d.contains("prompt")) out.prompt = prompt_name_from_string(d.at("prompt").get<std::string>());
      if (d.contains("strategy")) out.strategy = retrieval_kind_from_string(d.at("strategy").get<std::string>());
      out.k = d.value("k", out.k);
      out.hyde_answer_count = d.value("hyde_answer_count", out.hyde_answer_count);
      out.temperature = d.value("temperature", out.temperature);
      out.fact_batch_size = d.value("fact_batch_size", out.fact_batch_size);
      out.domain = d.value("domain", out.domain);
      if (d.contains("evaluations")) d.at("evaluations").get_to(out.evaluations);
      if (d.contains("filter")) {
        const auto& f = d.at("filter");
        out.filter.keyword_threshold = f.value("keyword_threshold", out.filter.keyword_threshold);
        out.filter.semantic_threshold = f.value("semantic_threshold", out.filter.semantic_threshold);
        out.filter.apply_keyword = f.value("apply_keyword", out.filter.apply_keyword);
        out.filter.apply_semantic = f.value("apply_semantic", out.filter.apply_semantic);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("pipeline config: ") + e.what());
  }
  validate(c);
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_config, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json clients = json::object();
  for (const auto& [name, cfg] : c.clients) clients[name] = cfg;
  const auto& d = c.defaults;
  return {{"store_root", c.store_root.string()},
          {"seed", c.seed},
          {"fixed_clock", c.fixed_clock ? json(*c.fixed_clock) : json(nullptr)},
          {"clients", clients},
          {"roles", c.roles},
          {"defaults",
           {{"prompt", to_string(d.prompt)},
            {"strategy", to_string(d.strategy)},
            {"k", d.k},
            {"hyde_answer_count", d.hyde_answer_count},
            {"temperature", d.temperature},
            {"fact_batch_size", d.fact_batch_size},
            {"domain", d.domain},
            {"evaluations", d.evaluations},
            {"filter",
             {{"keyword_threshold", d.filter.keyword_threshold},
              {"semantic_threshold", d.filter.semantic_threshold},
              {"apply_keyword", d.filter.apply_keyword},
              {"apply_semantic", d.filter.apply_semantic}}}}}};
}

void validate(const PipelineConfig& config) {
  for (const auto& [role, name] : config.roles) {
    bool known_role = false;
    for (const char* r : kRoles) known_role |= role == r;
    if (!known_role) throw Error(ErrorCode::invalid_config, "unknown role '" + role + "'");
    if (!config.clients.count(name)) {
      throw Error(ErrorCode::invalid_config, "role '" + role + "' names unknown client '" + name + "'");
    }
  }
  validate(config.defaults.filter);
  if (config.defaults.k < 1) throw Error(ErrorCode::invalid_config, "k must be >= 1");
  if (config.defaults.hyde_answer_count < 1) throw Error(ErrorCode::invalid_config, "hyde_answer_count must be >= 1");
  if (config.defaults.fact_batch_size < 1) throw Error(ErrorCode::invalid_config, "fact_batch_size must be >= 1");
  for (const auto& e : config.defaults.evaluations) {
    if (e != kAbstentionCheck && e != kFactualityCheck) {
      throw Error(ErrorCode::invalid_config, "unknown built-in evaluation '" + e + "'");
    }
  }
}

const ClientConfig& client_for_role(const PipelineConfig& config, const std::string& role,
                                    const std::string& override_name) {
  std::string name = override_name;
  if (name.empty()) {
    if (auto it = config.roles.find(role); it != config.roles.end()) {
      name = it->second;
    } else if (auto gen = config.roles.find("generator"); role == "hyde" && gen != config.roles.end()) {
      name = gen->second;
    } else if (config.clients.size() == 1) {
      name = config.clients.begin()->first;
    }
  }
  auto it = config.clients.find(name);
  if (it == config.clients.end()) {
    throw Error(ErrorCode::invalid_config,
                name.empty() ? "no client configured for role '" + role + "'" : "unknown client '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> PipelineResult::executed() const {
  std::vector<std::string> out;
  for (const auto& s : stages) {
    if (s.executed) out.push_back(s.stage);
  }
  return out;
}

std::vector<std::string> PipelineResult::skipped() const {
  std::vector<std::string> out;
  for (const auto& s : stages) {
    if (!s.executed) out.push_back(s.stage);
  }
  return out;
}

std::string config_hash(const json& settings) { return hash128_hex(settings.dump()); }

std::string derive_id(std::uint64_t seed, const std::string& stage, const std::vector<std::string>& upstream,
                      const std::string& hash) {
  std::string key = std::to_string(seed) + '\x1f' + stage + '\x1f';
  for (const auto& u : upstream) key += u + ',';
  return hash128_hex(key + '\x1f' + hash);
}

ArtifactContext make_context(const PipelineConfig& config) {
  if (config.fixed_clock) return ArtifactContext(fixed_clock(parse_timestamp(*config.fixed_clock)), config.seed);
  return ArtifactContext(system_clock_source(), config.seed);
}

std::pair<fs::path, fs::path> write_report(const std::vector<EvaluatedOutput>& outputs, const ArtifactStore& store,
                                           const fs::path& dir, const std::string& name) {
  const auto report = build_report(outputs);
  json lineage = json::object();
  for (const auto& o : outputs) {
    json chain = json::array();
    for (const auto& h : store.trace_lineage(o.header.artifact_id).chain) {
      chain.push_back({{"artifact_id", h.artifact_id}, {"kind", std::string(to_string(h.kind))}});
    }
    lineage[o.header.artifact_id] = chain;
  }
  json body = {{"evaluated_output_ids", json::array()}, {"metrics", to_json(report)}, {"lineage", lineage}};
  for (const auto& o : outputs) body["evaluated_output_ids"].push_back(o.header.artifact_id);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::storage, "cannot create " + dir.string() + ": " + ec.message());
  const auto json_path = dir / (name + ".json");
  const auto text_path = dir / (name + ".txt");
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::storage, "cannot write " + p.string());
  };
  write(json_path, body.dump(2) + "\n");
  write(text_path, render_table(report));
  return {json_path, text_path};
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot read source " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json client_identity(const ClientConfig& c) {
  return {{"provider", std::string(to_string(c.provider))},
          {"model", c.model},
          {"embedding_model", c.embedding_model.value_or("")},
          {"seed", c.seed}};
}

class Runner {
 public:
  Runner(const PipelineConfig& config, const ClientFactory& factory)
      : config_(config), store_(config.store_root), ctx_(make_context(config)), factory_(factory) {}

  ArtifactStore& store() { return store_; }
  ArtifactContext& ctx() { return ctx_; }
  PipelineResult& result() { return result_; }

  LlmClient& client(const std::string& role) {
    auto it = clients_.find(role);
    if (it != clients_.end()) return *it->second;
    const auto& cfg = client_for_role(config_, role);
    auto client = factory_ ? factory_(role, cfg) : make_client(cfg);
    return *clients_.emplace(role, std::move(client)).first->second;
  }

  // Loads the stage output when present, otherwise builds and saves it.
  template <class T, class Build>
  T stage(const std::string& name, const std::string& id, Build&& build) {
    try {
      if (store_.contains(T::kKind, id)) {
        result_.stages.push_back({name, id, false});
        last_id_ = id;
        return store_.load<T>(id);
      }
      T artifact = build();
      store_.save(artifact);
      result_.stages.push_back({name, id, true});
      last_id_ = id;
      return artifact;
    } catch (const Error& e) {
      throw Error(e.code(), "stage '" + name + "' failed (last persisted artifact: " +
                                (last_id_.empty() ? "none" : last_id_) + "): " + e.detail());
    }
  }

  void fail(const std::string& name, const Error& e) {
    throw Error(e.code(), "stage '" + name + "' failed (last persisted artifact: " +
                              (last_id_.empty() ? "none" : last_id_) + "): " + e.detail());
  }

  const std::string& last_id() const { return last_id_; }

 private:
  const PipelineConfig& config_;
  ArtifactStore store_;
  ArtifactContext ctx_;
  ClientFactory factory_;
  std::map<std::string, std::shared_ptr<LlmClient>> clients_;
  PipelineResult result_;
  std::string last_id_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& source_path, const PipelineChoices& choices,
                            const ClientFactory& factory) {
  validate(config);
  const auto& d = config.defaults;
  const std::uint64_t seed = config.seed;
  Runner run(config, factory);

  const PromptSpec prompt = default_prompt(choices.prompt.value_or(d.prompt));
  RetrievalConfig retrieval;
  retrieval.kind = choices.strategy.value_or(d.strategy);
  retrieval.k = d.k;
  retrieval.hyde_answer_count = d.hyde_answer_count;
  const auto evaluations = choices.evaluations.value_or(d.evaluations);

  // Source document.
  std::string body;
  try {
    body = read_text(source_path);
  } catch (const Error& e) {
    run.fail("ingest", e);
  }
  const std::string title = choices.title.empty() ? source_path.stem().string() : choices.title;
  Metadata doc_meta;
  if (!d.domain.empty()) doc_meta[std::string(meta::domain)] = d.domain;
  const json doc_settings = {{"title", title}, {"body", body}, {"domain", d.domain}};
  const auto doc_id = derive_id(seed, "ingest", {}, config_hash(doc_settings));
  const auto doc = run.stage<SourceDocument>("ingest", doc_id, [&] {
    auto m = doc_meta;
    m[std::string(meta::config_hash)] = config_hash(doc_settings);
    return make_source_document(title, body, run.ctx(), m, doc_id);
  });

  // Facts.
  FactExtractionConfig fact_cfg;
  fact_cfg.batch_size = d.fact_batch_size;
  const json fact_settings = {{"prompt", fact_cfg.effective_prompt()},
                              {"prompt_identifier", fact_cfg.prompt_identifier},
                              {"batch_size", fact_cfg.batch_size},
                              {"client", client_identity(client_for_role(config, "generator"))}};
  const auto facts_id = derive_id(seed, "extract-facts", {doc_id}, config_hash(fact_settings));
  const auto facts = run.stage<FactList>("extract-facts", facts_id, [&] {
    auto f = extract_facts(doc, fact_cfg, run.client("generator"), run.ctx(), facts_id);
    f.header.metadata[std::string(meta::config_hash)] = config_hash(fact_settings);
    return f;
  });

  // Raw QA pairs.
  QAGenConfig qa_cfg;
  const json qa_settings = {{"prompt", qa_cfg.effective_prompt()},
                            {"prompt_identifier", qa_cfg.prompt_identifier},
                            {"client", client_identity(client_for_role(config, "generator"))}};
  const auto qa_id = derive_id(seed, "generate-questions", {facts_id}, config_hash(qa_settings));
  const auto raw_qa = run.stage<QASet>("generate-questions", qa_id, [&] {
    auto s = generate_qa_set(facts, qa_cfg, run.client("generator"), run.ctx(), qa_id);
    s.header.metadata[std::string(meta::config_hash)] = config_hash(qa_settings);
    return s;
  });

  // Curated KB. Retrieval strategies need embeddings, so the embedder runs
  // whenever either the semantic filter or retrieval uses it.
  const bool needs_embedder = d.filter.apply_semantic || retrieval.kind == RetrievalKind::basic_rag ||
                              retrieval.kind == RetrievalKind::hyde_rag;
  json filter_settings = {{"keyword_threshold", d.filter.keyword_threshold},
                          {"semantic_threshold", d.filter.semantic_threshold},
                          {"apply_keyword", d.filter.apply_keyword},
                          {"apply_semantic", d.filter.apply_semantic},
                          {"embedder", needs_embedder ? client_identity(client_for_role(config, "embedder")) : json(nullptr)}};
  const auto kb_id = derive_id(seed, "filter", {qa_id}, config_hash(filter_settings));
  const auto kb = run.stage<QASet>("filter", kb_id, [&] {
    auto s = curate(raw_qa, d.filter, needs_embedder ? &run.client("embedder") : nullptr, run.ctx(), kb_id);
    s.header.metadata[std::string(meta::config_hash)] = config_hash(filter_settings);
    return s;
  });

  // Experiment spec.
  const auto& target_cfg = client_for_role(config, "target");
  const json spec_settings = {{"prompt", prompt.text},
                              {"prompt_identifier", prompt.identifier},
                              {"retrieval", retrieval},
                              {"temperature", d.temperature},
                              {"target", client_identity(target_cfg)}};
  const auto spec_id = derive_id(seed, "create-experiment", {kb_id}, config_hash(spec_settings));
  const auto spec = run.stage<ExperimentSpec>("create-experiment", spec_id, [&] {
    auto s = create_experiment(kb, prompt, retrieval, target_cfg.model, d.temperature, run.ctx(), nullptr, spec_id);
    s.header.metadata[std::string(meta::config_hash)] = config_hash(spec_settings);
    return s;
  });

  // Experiment run.
  const bool uses_hyde = retrieval.kind == RetrievalKind::hyde_rag;
  const bool uses_embedder = retrieval.kind == RetrievalKind::basic_rag || uses_hyde;
  const json run_settings = {
      {"target", client_identity(target_cfg)},
      {"embedder", uses_embedder ? client_identity(client_for_role(config, "embedder")) : json(nullptr)},
      {"hyde", uses_hyde ? client_identity(client_for_role(config, "hyde")) : json(nullptr)}};
  const auto output_id = derive_id(seed, "run-experiment", {kb_id, spec_id}, config_hash(run_settings));
  const auto output = run.stage<ExperimentOutput>("run-experiment", output_id, [&] {
    RetrievalDeps deps;
    if (uses_embedder) deps.embedder = &run.client("embedder");
    if (uses_hyde) deps.hyde_generator = &run.client("hyde");
    auto o = run_experiment(spec, kb, nullptr, run.client("target"), deps, run.ctx(), output_id);
    enforce_failure_budget(o);
    o.header.metadata[std::string(meta::config_hash)] = config_hash(run_settings);
    return o;
  });

  // Evaluation specs (content-addressed, shared across runs).
  std::vector<EvaluationSpec> specs;
  for (const auto& name : evaluations) {
    ArtifactContext probe(system_clock_source(), std::nullopt);
    const auto draft = name == kAbstentionCheck ? default_abstention_spec(probe) : default_factuality_spec(probe);
    const json eval_settings = {{"name", draft.evaluation_name},
                                {"prompt", draft.prompt_content},
                                {"prompt_identifier", draft.prompt_identifier},
                                {"outcomes", draft.evaluation_outcomes},
                                {"tag", draft.tag_name},
                                {"uses_expected_answer", draft.uses_expected_answer}};
    const auto eval_spec_id = derive_id(seed, "evaluation-spec", {}, config_hash(eval_settings));
    specs.push_back(run.stage<EvaluationSpec>("evaluation-spec:" + name, eval_spec_id, [&] {
      return name == kAbstentionCheck ? default_abstention_spec(run.ctx(), eval_spec_id)
                                      : default_factuality_spec(run.ctx(), eval_spec_id);
    }));
  }

  // Evaluation.
  const auto& judge_cfg = client_for_role(config, "judge");
  std::vector<std::string> eval_upstream = {output_id};
  for (const auto& s : specs) eval_upstream.push_back(s.header.artifact_id);
  const json evaluate_settings = {{"judge", client_identity(judge_cfg)}};
  const auto evaluated_id = derive_id(seed, "evaluate", eval_upstream, config_hash(evaluate_settings));
  const bool evaluated_existed = run.store().contains(ArtifactKind::evaluated_output, evaluated_id);
  const auto evaluated = run.stage<EvaluatedOutput>("evaluate", evaluated_id, [&] {
    auto e = evaluate_responses(output, specs, run.client("judge"), run.ctx(), evaluated_id);
    enforce_parse_budget(e);
    e.header.metadata[std::string(meta::config_hash)] = config_hash(evaluate_settings);
    return e;
  });

  // Report.
  auto& result = run.result();
  result.evaluated_output_id = evaluated_id;
  const auto dir = run.store().root() / "reports";
  result.report_json = dir / (evaluated_id + ".json");
  result.report_text = dir / (evaluated_id + ".txt");
  const bool report_current = evaluated_existed && fs::exists(result.report_json) && fs::exists(result.report_text);
  if (!report_current) {
    try {
      write_report({evaluated}, run.store(), dir, evaluated_id);
    } catch (const Error& e) {
      run.fail("report", e);
    }
  }
  result.stages.push_back({"report", evaluated_id, !report_current});
  return result;
}

}  // namespace ookb
