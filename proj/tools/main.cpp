// ookb command-line entry point.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ookb/artifact_store.h"
#include "ookb/diversity_filter.h"
#include "ookb/error.h"
#include "ookb/evaluation.h"
#include "ookb/experiment.h"
#include "ookb/gateway.h"
#include "ookb/kb_builder.h"
#include "ookb/label_server.h"
#include "ookb/labeling.h"
#include "ookb/parsers.h"
#include "ookb/pipeline.h"

using namespace ookb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string store;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string client;
  std::string fixed_clock;
  // Command arguments minus store/config paths; keys the id sequence.
  std::string invocation;
};

struct Env {
  PipelineConfig config;
  std::unique_ptr<ArtifactStore> store;
  std::unique_ptr<ArtifactContext> ctx;
  std::string client_override;

  std::shared_ptr<LlmClient> client(const std::string& role) const {
    return make_client(client_for_role(config, role, client_override));
  }
  std::uint64_t seed() const { return config.seed; }
};

Env make_env(const Globals& g) {
  Env env;
  if (!g.config_path.empty()) {
    env.config = load_pipeline_config(g.config_path);
  } else {
    env.config.clients["mock"] = ClientConfig{};
  }
  if (!g.store.empty()) env.config.store_root = g.store;
  if (g.seed) env.config.seed = *g.seed;
  if (!g.fixed_clock.empty()) env.config.fixed_clock = g.fixed_clock;
  validate(env.config);
  env.client_override = g.client;
  env.store = std::make_unique<ArtifactStore>(env.config.store_root);
  // Each invocation gets its own id stream: the same command sequence on a
  // fresh store reproduces the same ids, but separate commands never collide.
  std::size_t existing = 0;
  std::error_code ec;
  if (fs::is_directory(env.store->root(), ec)) {
    for (const auto& e : fs::recursive_directory_iterator(env.store->root(), ec)) {
      existing += e.is_regular_file() && e.path().extension() == ".json";
    }
  }
  auto config = env.config;
  config.seed = hash64(g.invocation + "#" + std::to_string(existing), env.config.seed);
  env.ctx = std::make_unique<ArtifactContext>(make_context(config));
  return env;
}

void announce(const ArtifactHeader& h) { std::cout << to_string(h.kind) << ' ' << h.artifact_id << '\n'; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Builds out-of-knowledge-base QA benchmarks and runs abstention experiments."};
  app.require_subcommand(1);
  Globals g;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--store" || a == "--config") {
      ++i;
      continue;
    }
    if (a.rfind("--store=", 0) == 0 || a.rfind("--config=", 0) == 0) continue;
    g.invocation += a + '\x1f';
  }
  app.add_option("--store", g.store, "Artifact store directory (overrides the config)");
  app.add_option("--config", g.config_path, "Pipeline config JSON");
  app.add_option("--seed", g.seed, "Seed for sampling, shuffles and derived ids");
  app.add_option("--client", g.client, "Client name to use instead of the configured role");
  app.add_option("--fixed-clock", g.fixed_clock, "Use this RFC 3339 time for every timestamp");

  std::function<void()> action;

  // extract-facts
  auto* ef = app.add_subcommand("extract-facts", "Segment a document and extract grounded atomic facts");
  std::string ef_input, ef_document, ef_faq, ef_title, ef_domain, ef_prompt_file, ef_prompt_id;
  int ef_batch = 10;
  ef->add_option("--input", ef_input, "Plain-text source document");
  ef->add_option("--document", ef_document, "Existing source_document id");
  ef->add_option("--faq", ef_faq, "JSON-lines FAQ file; bypasses the LLM");
  ef->add_option("--title", ef_title, "Document title");
  ef->add_option("--domain", ef_domain, "Domain label recorded in metadata");
  ef->add_option("--prompt-file", ef_prompt_file, "Custom extraction prompt");
  ef->add_option("--prompt-id", ef_prompt_id, "Identifier for the custom prompt");
  ef->add_option("--batch-size", ef_batch, "Sentences per extraction call");
  ef->callback([&] {
    action = [&] {
      auto env = make_env(g);
      Metadata m;
      if (!ef_domain.empty()) m[std::string(meta::domain)] = ef_domain;
      if (!ef_faq.empty()) {
        auto ingest = ingest_faq(read_faq_jsonl(ef_faq), ef_title.empty() ? fs::path(ef_faq).stem().string() : ef_title,
                                 *env.ctx, m);
        env.store->save(ingest.document);
        env.store->save(ingest.facts);
        env.store->save(ingest.qa_set);
        announce(ingest.document.header);
        announce(ingest.facts.header);
        announce(ingest.qa_set.header);
        return;
      }
      SourceDocument doc;
      if (!ef_input.empty()) {
        doc = make_source_document(ef_title.empty() ? fs::path(ef_input).stem().string() : ef_title,
                                   read_file(ef_input), *env.ctx, m);
        env.store->save(doc);
        announce(doc.header);
      } else if (!ef_document.empty()) {
        doc = env.store->load<SourceDocument>(ef_document);
      } else {
        throw Error(ErrorCode::precondition, "one of --input, --document or --faq is required");
      }
      FactExtractionConfig cfg;
      cfg.batch_size = ef_batch;
      if (!ef_prompt_file.empty()) {
        cfg.prompt_text = read_file(ef_prompt_file);
        cfg.prompt_identifier = ef_prompt_id.empty() ? fs::path(ef_prompt_file).stem().string() : ef_prompt_id;
      }
      auto facts = extract_facts(doc, cfg, *env.client("generator"), *env.ctx);
      env.store->save(facts);
      announce(facts.header);
    };
  });

  // generate-questions
  auto* gq = app.add_subcommand("generate-questions", "Generate one QA pair per fact, or synthetic topic questions");
  std::string gq_facts, gq_topic, gq_prompt_file, gq_prompt_id;
  int gq_count = 10;
  gq->add_option("--facts", gq_facts, "fact_list id");
  gq->add_option("--topic", gq_topic, "Topic for synthetic questions without answers");
  gq->add_option("--count", gq_count, "Number of synthetic questions");
  gq->add_option("--prompt-file", gq_prompt_file, "Custom QA generation prompt");
  gq->add_option("--prompt-id", gq_prompt_id, "Identifier for the custom prompt");
  gq->callback([&] {
    action = [&] {
      auto env = make_env(g);
      auto client = env.client("generator");
      if (!gq_topic.empty()) {
        auto questions = generate_synthetic_queries(gq_topic, gq_count, *client);
        auto topic_doc = make_source_document("synthetic topic", gq_topic, *env.ctx);
        env.store->save(topic_doc);
        auto set = make_synthetic_query_set(questions, topic_doc, client->model(), *env.ctx);
        env.store->save(set);
        announce(topic_doc.header);
        announce(set.header);
        return;
      }
      if (gq_facts.empty()) throw Error(ErrorCode::precondition, "--facts or --topic is required");
      QAGenConfig cfg;
      if (!gq_prompt_file.empty()) {
        cfg.prompt_text = read_file(gq_prompt_file);
        cfg.prompt_identifier = gq_prompt_id.empty() ? fs::path(gq_prompt_file).stem().string() : gq_prompt_id;
      }
      auto set = generate_qa_set(env.store->load<FactList>(gq_facts), cfg, *client, *env.ctx);
      env.store->save(set);
      announce(set.header);
    };
  });

  // filter
  auto* fl = app.add_subcommand("filter", "Keyword and semantic diversity filtering of a QA set");
  std::string fl_qa;
  FilterConfig fl_cfg;
  bool fl_no_keyword = false, fl_no_semantic = false, fl_no_embed = false;
  fl->add_option("--qa", fl_qa, "qa_set id")->required();
  fl->add_option("--keyword-threshold", fl_cfg.keyword_threshold, "Fraction of the uniqueness range to cut");
  fl->add_option("--semantic-threshold", fl_cfg.semantic_threshold, "Minimum cosine distance between kept pairs");
  fl->add_flag("--no-keyword", fl_no_keyword, "Skip the keyword filter");
  fl->add_flag("--no-semantic", fl_no_semantic, "Skip the semantic filter");
  fl->add_flag("--no-embeddings", fl_no_embed, "Do not attach embeddings (requires --no-semantic)");
  fl->callback([&] {
    action = [&] {
      auto env = make_env(g);
      fl_cfg.apply_keyword = !fl_no_keyword;
      fl_cfg.apply_semantic = !fl_no_semantic;
      std::shared_ptr<LlmClient> embedder;
      if (!fl_no_embed) embedder = env.client("embedder");
      auto kb = curate(env.store->load<QASet>(fl_qa), fl_cfg, embedder.get(), *env.ctx);
      env.store->save(kb);
      std::cerr << "kept " << kb.header.metadata.at("count_after") << " of " << kb.header.metadata.at("count_before")
                << " pairs\n";
      announce(kb.header);
    };
  });

  // create-experiment
  auto* ce = app.add_subcommand("create-experiment", "Define a leave-one-out or synthetic-query experiment");
  std::string ce_kb, ce_prompt = "basic", ce_prompt_file, ce_prompt_id, ce_strategy = "basic_rag", ce_questions,
                     ce_target;
  bool ce_requires_context = false;
  RetrievalConfig ce_retrieval;
  double ce_temperature = 0.0;
  ce->add_option("--kb", ce_kb, "Curated qa_set id")->required();
  ce->add_option("--prompt", ce_prompt, "basic, conservative or opinion_based");
  ce->add_option("--prompt-file", ce_prompt_file, "Custom system prompt file");
  ce->add_option("--prompt-id", ce_prompt_id, "Identifier for the custom prompt");
  ce->add_flag("--requires-context", ce_requires_context, "Custom prompt relies on context");
  ce->add_option("--strategy", ce_strategy, "direct, long_in_context, basic_rag or hyde_rag");
  ce->add_option("--k", ce_retrieval.k, "Pairs retrieved by RAG strategies");
  ce->add_option("--hyde-count", ce_retrieval.hyde_answer_count, "Hypothetical answers per question");
  ce->add_option("--questions", ce_questions, "Synthetic question set id");
  ce->add_option("--temperature", ce_temperature, "Target sampling temperature");
  ce->add_option("--target-model", ce_target, "Target model id (defaults to the target client's model)");
  ce->callback([&] {
    action = [&] {
      auto env = make_env(g);
      PromptSpec prompt = ce_prompt_file.empty()
                              ? default_prompt(prompt_name_from_string(ce_prompt))
                              : custom_prompt(ce_prompt_id.empty() ? fs::path(ce_prompt_file).stem().string() : ce_prompt_id,
                                              read_file(ce_prompt_file), ce_requires_context);
      ce_retrieval.kind = retrieval_kind_from_string(ce_strategy);
      if (ce_retrieval.kind == RetrievalKind::custom) ce_retrieval.custom_name = ce_strategy;
      const auto kb = env.store->load<QASet>(ce_kb);
      std::optional<QASet> questions;
      if (!ce_questions.empty()) questions = env.store->load<QASet>(ce_questions);
      const std::string target =
          ce_target.empty() ? client_for_role(env.config, "target", env.client_override).model : ce_target;
      auto spec = create_experiment(kb, prompt, ce_retrieval, target, ce_temperature, *env.ctx,
                                    questions ? &*questions : nullptr);
      env.store->save(spec);
      announce(spec.header);
    };
  });

  // run-experiment
  auto* re = app.add_subcommand("run-experiment", "Run an experiment against the target model");
  std::string re_spec;
  re->add_option("--spec", re_spec, "experiment_spec id")->required();
  re->callback([&] {
    action = [&] {
      auto env = make_env(g);
      const auto spec = env.store->load<ExperimentSpec>(re_spec);
      const auto kb = env.store->load<QASet>(spec.kb_id);
      std::optional<QASet> questions;
      if (spec.questions_id) questions = env.store->load<QASet>(*spec.questions_id);
      auto target = env.client("target");
      std::shared_ptr<LlmClient> embedder, hyde;
      RetrievalDeps deps;
      if (spec.retrieval.kind == RetrievalKind::basic_rag || spec.retrieval.kind == RetrievalKind::hyde_rag ||
          spec.retrieval.kind == RetrievalKind::custom) {
        embedder = make_client(client_for_role(env.config, "embedder"));
        deps.embedder = embedder.get();
      }
      if (spec.retrieval.kind == RetrievalKind::hyde_rag || spec.retrieval.kind == RetrievalKind::custom) {
        hyde = make_client(client_for_role(env.config, "hyde"));
        deps.hyde_generator = hyde.get();
      }
      auto output = run_experiment(spec, kb, questions ? &*questions : nullptr, *target, deps, *env.ctx);
      env.store->save(output);
      announce(output.header);
      enforce_failure_budget(output);
    };
  });

  // eval-spec
  auto* es = app.add_subcommand("eval-spec", "Create a custom evaluation spec");
  std::string es_name, es_prompt_file, es_prompt_id, es_outcomes, es_tag;
  bool es_no_expected = false;
  es->add_option("--name", es_name, "Evaluation name")->required();
  es->add_option("--prompt-file", es_prompt_file, "Judge system prompt")->required();
  es->add_option("--prompt-id", es_prompt_id, "Prompt identifier");
  es->add_option("--outcomes", es_outcomes, "Comma-separated outcomes")->required();
  es->add_option("--tag", es_tag, "Tag holding the decision")->required();
  es->add_flag("--no-expected-answer", es_no_expected, "Judge without the expected answer");
  es->callback([&] {
    action = [&] {
      auto env = make_env(g);
      auto spec = create_evaluation_spec(es_name, es_prompt_id.empty() ? es_name : es_prompt_id,
                                         read_file(es_prompt_file), split_csv(es_outcomes), es_tag, !es_no_expected,
                                         *env.ctx);
      env.store->save(spec);
      announce(spec.header);
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Judge experiment responses");
  std::string ev_output, ev_defaults;
  std::vector<std::string> ev_specs;
  ev->add_option("--output", ev_output, "experiment_output id")->required();
  ev->add_option("--spec", ev_specs, "evaluation_spec id (repeatable)");
  ev->add_option("--defaults", ev_defaults, "Built-in specs to add: abstention,factuality");
  ev->callback([&] {
    action = [&] {
      auto env = make_env(g);
      const auto output = env.store->load<ExperimentOutput>(ev_output);
      std::vector<EvaluationSpec> specs;
      for (const auto& id : ev_specs) specs.push_back(env.store->load<EvaluationSpec>(id));
      std::string defaults = ev_defaults;
      if (specs.empty() && defaults.empty()) {
        const auto gt = output.header.metadata.find(std::string(meta::ground_truth));
        defaults = gt != output.header.metadata.end() && gt->second == "absent" ? "abstention" : "abstention,factuality";
      }
      for (const auto& name : split_csv(defaults)) {
        if (name == "abstention") {
          specs.push_back(default_abstention_spec(*env.ctx));
        } else if (name == "factuality") {
          specs.push_back(default_factuality_spec(*env.ctx));
        } else {
          throw Error(ErrorCode::invalid_config, "unknown built-in evaluation '" + name + "'");
        }
      }
      for (const auto& s : specs) {
        if (!env.store->contains(ArtifactKind::evaluation_spec, s.header.artifact_id)) {
          env.store->save(s);
          announce(s.header);
        }
      }
      auto evaluated = evaluate_responses(output, specs, *env.client("judge"), *env.ctx);
      env.store->save(evaluated);
      announce(evaluated.header);
      enforce_parse_budget(evaluated);
    };
  });

  // sample
  auto* sp = app.add_subcommand("sample", "Stratified sample into a new label session");
  std::vector<std::string> sp_evaluated;
  std::string sp_dimensions = "prompt,strategy", sp_annotators, sp_evaluation = std::string(kAbstentionCheck);
  int sp_n = 5;
  sp->add_option("--evaluated", sp_evaluated, "evaluated_output id (repeatable)")->required();
  sp->add_option("--dimensions", sp_dimensions, "Comma-separated stratification dimensions");
  sp->add_option("--n", sp_n, "Items per stratum");
  sp->add_option("--annotators", sp_annotators, "Comma-separated annotator ids")->required();
  sp->add_option("--evaluation", sp_evaluation, "Evaluation whose outcomes are labeled");
  sp->callback([&] {
    action = [&] {
      auto env = make_env(g);
      std::vector<EvaluatedOutput> outputs;
      for (const auto& id : sp_evaluated) outputs.push_back(env.store->load<EvaluatedOutput>(id));
      std::optional<EvaluationSpec> schema;
      for (const auto& o : outputs) {
        for (const auto& up : o.header.upstream_ids) {
          auto h = env.store->find_header(up);
          if (!h || h->kind != ArtifactKind::evaluation_spec) continue;
          auto spec = env.store->load<EvaluationSpec>(up);
          if (spec.evaluation_name == sp_evaluation) schema = spec;
        }
      }
      if (!schema) {
        throw Error(ErrorCode::precondition, "no evaluation named '" + sp_evaluation + "' upstream of the outputs");
      }
      auto items = stratified_sample(outputs, split_csv(sp_dimensions), sp_n, env.seed(), sp_evaluation);
      auto session = create_session(std::move(items), *schema, split_csv(sp_annotators), env.seed(), *env.ctx);
      env.store->save(session);
      std::cerr << session.items.size() << " items, " << session.annotators.size() << " annotators\n";
      announce(session.header);
    };
  });

  // label serve / label tui
  auto* lb = app.add_subcommand("label", "Human labeling");
  lb->require_subcommand(1);
  auto* ls = lb->add_subcommand("serve", "Serve the labeling HTTP API and UI");
  std::string ls_session, ls_host = kDefaultLabelHost, ls_ui = "ui/dist";
  int ls_port = kDefaultLabelPort;
  ls->add_option("--session", ls_session, "label_session id")->required();
  ls->add_option("--host", ls_host, "Bind address");
  ls->add_option("--port", ls_port, "Port");
  ls->add_option("--ui-dir", ls_ui, "Static UI bundle directory");
  ls->callback([&] {
    action = [&] {
      auto env = make_env(g);
      LabelServer server(*env.store, env.store->load<LabelSession>(ls_session), *env.ctx, fs::path(ls_ui));
      std::cout << "serving session " << ls_session << " on http://" << ls_host << ':' << ls_port << std::endl;
      if (!server.listen(ls_host, ls_port)) {
        throw Error(ErrorCode::storage, "cannot bind " + ls_host + ":" + std::to_string(ls_port));
      }
    };
  });
  auto* lt = lb->add_subcommand("tui", "Label in the terminal");
  std::string lt_session, lt_annotator;
  lt->add_option("--session", lt_session, "label_session id")->required();
  lt->add_option("--annotator", lt_annotator, "Annotator id")->required();
  lt->callback([&] {
    action = [&] {
      auto env = make_env(g);
      auto session = env.store->load<LabelSession>(lt_session);
      run_terminal_labeling(session, lt_annotator, std::cin, std::cout,
                            [&](const LabelSession& s) { env.store->save(s); });
      const auto stats = compute_agreement(session);
      std::cout << "agreement " << to_json(stats).dump() << '\n';
      if (session.annotators.size() >= 2) {
        for (const auto& id : stats.disagreements) std::cout << "disagreement " << id << '\n';
      }
      std::cout << "status " << (session.status == SessionStatus::complete ? "complete" : "open") << '\n';
    };
  });

  // consensus
  auto* cs = app.add_subcommand("consensus", "Resolve disagreements into consensus labels");
  std::string cs_session, cs_file;
  std::vector<std::string> cs_resolve;
  cs->add_option("--session", cs_session, "Completed label_session id")->required();
  cs->add_option("--resolve", cs_resolve, "item_id=outcome (repeatable)");
  cs->add_option("--resolutions", cs_file, "JSON object of item_id -> outcome");
  cs->callback([&] {
    action = [&] {
      auto env = make_env(g);
      std::map<std::string, std::string> resolutions;
      if (!cs_file.empty()) {
        try {
          resolutions = json::parse(read_file(cs_file)).get<std::map<std::string, std::string>>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::parse, cs_file + ": " + e.what());
        }
      }
      for (const auto& r : cs_resolve) {
        const auto eq = r.rfind('=');
        if (eq == std::string::npos) throw Error(ErrorCode::precondition, "--resolve expects item_id=outcome");
        resolutions[r.substr(0, eq)] = r.substr(eq + 1);
      }
      auto consensus = consensus_labels(env.store->load<LabelSession>(cs_session), resolutions, *env.ctx);
      env.store->save(consensus);
      announce(consensus.header);
    };
  });

  // validate-evaluator
  auto* ve = app.add_subcommand("validate-evaluator", "Compare judge outcomes with consensus labels");
  std::string ve_session, ve_positive = "Yes", ve_auto, ve_human;
  ve->add_option("--session", ve_session, "Consensus label_session id");
  ve->add_option("--positive", ve_positive, "Positive class");
  ve->add_option("--auto", ve_auto, "JSON array of automatic labels");
  ve->add_option("--human", ve_human, "JSON array of human labels");
  ve->callback([&] {
    action = [&] {
      std::vector<std::string> automatic, human;
      if (!ve_session.empty()) {
        auto env = make_env(g);
        const auto session = env.store->load<LabelSession>(ve_session);
        if (session.consensus.empty()) {
          throw Error(ErrorCode::precondition, "session " + ve_session + " has no consensus labels; run consensus first");
        }
        std::tie(automatic, human) = auto_vs_consensus(session);
      } else {
        try {
          automatic = json::parse(read_file(ve_auto)).get<std::vector<std::string>>();
          human = json::parse(read_file(ve_human)).get<std::vector<std::string>>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::parse, e.what());
        }
      }
      std::cout << to_json(validate_evaluator(automatic, human, ve_positive)).dump(2) << '\n';
    };
  });

  // report
  auto* rp = app.add_subcommand("report", "Abstention and factuality rates per configuration");
  std::vector<std::string> rp_evaluated;
  std::string rp_out, rp_name = "report";
  rp->add_option("--evaluated", rp_evaluated, "evaluated_output id (repeatable; default all)");
  rp->add_option("--out", rp_out, "Output directory (default <store>/reports)");
  rp->add_option("--name", rp_name, "Report file stem");
  rp->callback([&] {
    action = [&] {
      auto env = make_env(g);
      std::vector<EvaluatedOutput> outputs;
      if (rp_evaluated.empty()) {
        for (const auto& h : env.store->list(ArtifactKind::evaluated_output)) rp_evaluated.push_back(h.artifact_id);
      }
      for (const auto& id : rp_evaluated) outputs.push_back(env.store->load<EvaluatedOutput>(id));
      if (outputs.empty()) throw Error(ErrorCode::precondition, "no evaluated outputs in the store");
      const auto [json_path, text_path] =
          write_report(outputs, *env.store, rp_out.empty() ? env.store->root() / "reports" : fs::path(rp_out), rp_name);
      std::cout << read_file(text_path.string());
      std::cerr << "wrote " << json_path.string() << " and " << text_path.string() << '\n';
    };
  });

  // lineage
  auto* ln = app.add_subcommand("lineage", "Print the provenance chain of an artifact");
  std::string ln_id;
  ln->add_option("--id", ln_id, "Artifact id")->required();
  ln->callback([&] {
    action = [&] {
      auto env = make_env(g);
      for (const auto& h : env.store->trace_lineage(ln_id).chain) announce(h);
    };
  });

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run every stage from a source document to a report");
  std::string pl_input, pl_prompt, pl_strategy, pl_evaluations, pl_title;
  pl->add_option("--input", pl_input, "Plain-text source document")->required();
  pl->add_option("--prompt", pl_prompt, "System prompt (default from config)");
  pl->add_option("--strategy", pl_strategy, "Retrieval strategy (default from config)");
  pl->add_option("--evaluations", pl_evaluations, "Comma-separated built-in evaluations");
  pl->add_option("--title", pl_title, "Document title");
  pl->callback([&] {
    action = [&] {
      auto env = make_env(g);
      if (!env.client_override.empty()) {
        for (const char* role : kRoles) env.config.roles[role] = env.client_override;
      }
      PipelineChoices choices;
      if (!pl_prompt.empty()) choices.prompt = prompt_name_from_string(pl_prompt);
      if (!pl_strategy.empty()) choices.strategy = retrieval_kind_from_string(pl_strategy);
      if (!pl_evaluations.empty()) choices.evaluations = split_csv(pl_evaluations);
      choices.title = pl_title;
      const auto result = run_pipeline(env.config, pl_input, choices);
      for (const auto& s : result.stages) {
        std::cout << (s.executed ? "ran     " : "skipped ") << s.stage << ' ' << s.artifact_id << '\n';
      }
      std::cout << "report " << result.report_json.string() << '\n' << "report " << result.report_text.string() << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.category());
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
