#include "ookb/artifact_store.h"

#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "ookb/error.h"

namespace ookb {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::chrono::system_clock::time_point parse_timestamp(std::string_view text) {
  std::tm tm{};
  std::istringstream in{std::string(text)};
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  if (in.fail() || text.size() != 20 || text.back() != 'Z') {
    throw Error(ErrorCode::invalid_config, "timestamp '" + std::string(text) +
                                               "' is not RFC 3339 UTC (YYYY-MM-DDTHH:MM:SSZ)");
  }
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

Clock system_clock_source() {
  return [] { return std::chrono::system_clock::now(); };
}

Clock fixed_clock(std::chrono::system_clock::time_point t) {
  return [t] { return t; };
}

ArtifactContext::ArtifactContext() : clock_(system_clock_source()) {}

ArtifactContext::ArtifactContext(Clock clock, std::optional<std::uint64_t> id_seed)
    : clock_(std::move(clock)) {
  if (id_seed) rng_.emplace(*id_seed);
}

ArtifactHeader ArtifactContext::make_header(ArtifactKind kind, std::vector<std::string> upstream_ids,
                                            Metadata metadata,
                                            std::optional<std::string> artifact_id) {
  ArtifactHeader h;
  if (artifact_id) {
    h.artifact_id = std::move(*artifact_id);
  } else {
    h.artifact_id = rng_ ? rng_->hex_id() : random_artifact_id();
  }
  h.kind = kind;
  h.created_at = now();
  h.creator = std::string(kCreator);
  h.upstream_ids = std::move(upstream_ids);
  h.metadata = std::move(metadata);
  return h;
}

std::string ArtifactContext::now() const { return format_timestamp(clock_()); }

// ---------------------------------------------------------------------------

std::string serialize_artifact(const AnyArtifact& artifact) {
  json doc = {{"schema_version", kSchemaVersion},
              {"header", header_of(artifact)},
              {"payload", payload_to_json(artifact)}};
  return doc.dump(2) + "\n";
}

AnyArtifact parse_artifact(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, e.what());
  }
  try {
    if (!doc.is_object()) throw Error(ErrorCode::schema, "document: must be a JSON object");
    for (const auto& [key, _] : doc.items()) {
      if (key != "schema_version" && key != "header" && key != "payload") {
        throw Error(ErrorCode::schema, key + ": unexpected top-level field");
      }
    }
    if (doc.at("schema_version") != kSchemaVersion) {
      throw Error(ErrorCode::schema, "schema_version: unsupported version");
    }
    auto header = doc.at("header").get<ArtifactHeader>();
    AnyArtifact artifact = artifact_from_json(std::move(header), doc.at("payload"));
    validate(artifact);
    return artifact;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema, e.what());
  }
}

namespace {

// Kinds an artifact may name upstream, with the kind its first upstream
// (its primary data parent) must have.
struct UpstreamRule {
  std::set<ArtifactKind> allowed;
  std::set<ArtifactKind> primary;
};

UpstreamRule upstream_rule(ArtifactKind kind) {
  using K = ArtifactKind;
  switch (kind) {
    case K::source_document: return {{}, {}};
    case K::fact_list: return {{K::source_document}, {K::source_document}};
    case K::qa_set:
      return {{K::fact_list, K::qa_set, K::source_document},
              {K::fact_list, K::qa_set, K::source_document}};
    case K::experiment_spec: return {{K::qa_set}, {K::qa_set}};
    case K::experiment_output:
      return {{K::qa_set, K::experiment_spec}, {K::qa_set}};
    case K::evaluation_spec: return {{}, {}};
    case K::evaluated_output:
      return {{K::experiment_output, K::evaluation_spec}, {K::experiment_output}};
    case K::label_session:
      return {{K::evaluated_output, K::evaluation_spec, K::label_session},
              {K::evaluated_output, K::label_session}};
  }
  return {};
}

void check_upstream(const AnyArtifact& artifact, const ArtifactStore& store) {
  const auto& h = header_of(artifact);
  const auto rule = upstream_rule(h.kind);
  for (std::size_t i = 0; i < h.upstream_ids.size(); ++i) {
    auto up = store.find_header(h.upstream_ids[i]);
    if (!up) continue;  // dangling ids surface in trace_lineage
    const auto& allowed = i == 0 ? rule.primary : rule.allowed;
    if (!allowed.count(up->kind)) {
      throw Error(ErrorCode::schema, "upstream_ids: " + std::string(to_string(h.kind)) +
                                         " cannot list a " + std::string(to_string(up->kind)) +
                                         (i == 0 ? " as its primary upstream" : " upstream"));
    }
  }
  // Grounding of facts against their source document.
  if (const auto* facts = std::get_if<FactList>(&artifact)) {
    auto doc = store.find(h.upstream_ids.front());
    if (doc) {
      const auto& sentences = std::get<SourceDocument>(*doc).sentences;
      for (const auto& f : facts->facts) {
        if (f.source_sentence > static_cast<int>(sentences.size())) {
          throw Error(ErrorCode::schema, "facts.source_sentence: fact " + std::to_string(f.fact_id) +
                                             " cites missing sentence " +
                                             std::to_string(f.source_sentence));
        }
      }
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::storage, "read failed for " + path.string());
  return out.str();
}

}  // namespace

ArtifactRef save_artifact(const AnyArtifact& artifact, const fs::path& store_root,
                          const SaveOptions& options) {
  return ArtifactStore(store_root).save(artifact, options);
}

AnyArtifact load_artifact(const fs::path& path, ArtifactKind expected_kind) {
  AnyArtifact artifact = parse_artifact(read_file(path));
  const auto kind = header_of(artifact).kind;
  if (kind != expected_kind) {
    throw Error(ErrorCode::kind_mismatch, path.string() + " holds a " + std::string(to_string(kind)) +
                                              ", expected " + std::string(to_string(expected_kind)));
  }
  return artifact;
}

// ---------------------------------------------------------------------------

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {}

fs::path ArtifactStore::path_for(ArtifactKind kind, const std::string& id) const {
  return root_ / std::string(to_string(kind)) / (id + ".json");
}

ArtifactRef ArtifactStore::save(const AnyArtifact& artifact, const SaveOptions& options) const {
  validate(artifact);
  check_upstream(artifact, *this);
  const auto& h = header_of(artifact);
  const std::string text = serialize_artifact(artifact);
  const fs::path target = path_for(h.kind, h.artifact_id);

  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw Error(ErrorCode::storage, "cannot create " + target.parent_path().string() + ": " + ec.message());

  // Append-only, except label sessions which are checkpointed in place.
  if (fs::exists(target) && h.kind != ArtifactKind::label_session) {
    if (read_file(target) == text) return {h.artifact_id, h.kind, target};
    throw Error(ErrorCode::storage, "artifact " + h.artifact_id + " already exists with different content");
  }

  const fs::path temp = target.parent_path() / ("." + h.artifact_id + ".json.tmp-" + random_artifact_id().substr(0, 8));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::storage, "cannot open " + temp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::storage, "write failed for " + temp.string());
  }
  if (options.before_rename) options.before_rename(temp);
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp);
    throw Error(ErrorCode::storage, "rename to " + target.string() + " failed: " + ec.message());
  }
  return {h.artifact_id, h.kind, target};
}

bool ArtifactStore::contains(ArtifactKind kind, const std::string& id) const {
  return fs::exists(path_for(kind, id));
}

std::optional<AnyArtifact> ArtifactStore::find(const std::string& id) const {
  for (auto kind : kAllKinds) {
    const auto path = path_for(kind, id);
    if (fs::exists(path)) return load_artifact(path, kind);
  }
  return std::nullopt;
}

std::optional<ArtifactHeader> ArtifactStore::find_header(const std::string& id) const {
  auto artifact = find(id);
  if (!artifact) return std::nullopt;
  return header_of(*artifact);
}

std::vector<ArtifactHeader> ArtifactStore::list(ArtifactKind kind) const {
  std::vector<ArtifactHeader> out;
  const fs::path dir = root_ / std::string(to_string(kind));
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.front() != '.' && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(header_of(load_artifact(f, kind)));
  return out;
}

Lineage ArtifactStore::trace_lineage(const std::string& artifact_id) const {
  std::map<std::string, ArtifactHeader> headers;
  auto lookup = [&](const std::string& id, const std::string& referenced_by) -> const ArtifactHeader& {
    auto it = headers.find(id);
    if (it != headers.end()) return it->second;
    auto h = find_header(id);
    if (!h) {
      throw Error(ErrorCode::lineage_broken,
                  referenced_by.empty() ? "artifact " + id + " not found in store"
                                        : "missing upstream id " + id + " (referenced by " + referenced_by + ")");
    }
    return headers.emplace(id, std::move(*h)).first->second;
  };

  Lineage lineage;
  std::set<std::string> done;
  std::set<std::string> on_stack;
  std::function<void(const std::string&, const std::string&)> visit =
      [&](const std::string& id, const std::string& parent) {
        if (done.count(id)) return;
        if (!on_stack.insert(id).second) {
          throw Error(ErrorCode::lineage_broken, "cycle through artifact " + id);
        }
        const ArtifactHeader header = lookup(id, parent);
        for (const auto& up : header.upstream_ids) visit(up, id);
        on_stack.erase(id);
        done.insert(id);
        lineage.closure.push_back(header);
      };
  visit(artifact_id, "");

  const ArtifactHeader* cursor = &headers.at(artifact_id);
  while (true) {
    lineage.chain.push_back(*cursor);
    if (cursor->upstream_ids.empty()) break;
    cursor = &headers.at(cursor->upstream_ids.front());
  }
  std::reverse(lineage.chain.begin(), lineage.chain.end());
  return lineage;
}

Lineage trace_lineage(const std::string& artifact_id, const fs::path& store_root) {
  return ArtifactStore(store_root).trace_lineage(artifact_id);
}

}  // namespace ookb
