// On-disk artifact store: <root>/<kind>/<artifact_id>.json, canonical sorted-key
// JSON, atomic writes, and lineage tracing across upstream ids.
#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ookb/hashing.h"
#include "ookb/types.h"

namespace ookb {

inline constexpr std::string_view kSchemaVersion = "1";
inline constexpr std::string_view kCreator = "ookb/0.1.0";

using Clock = std::function<std::chrono::system_clock::time_point()>;

/// RFC 3339 UTC with second precision, e.g. 2025-01-31T09:30:00Z.
std::string format_timestamp(std::chrono::system_clock::time_point t);
std::chrono::system_clock::time_point parse_timestamp(std::string_view text);

Clock system_clock_source();
Clock fixed_clock(std::chrono::system_clock::time_point t);

/// Stamps headers. Ids are random unless a seed is given; callers that need
/// content-addressed ids (the pipeline) pass an explicit id.
class ArtifactContext {
 public:
  ArtifactContext();
  ArtifactContext(Clock clock, std::optional<std::uint64_t> id_seed);

  ArtifactHeader make_header(ArtifactKind kind, std::vector<std::string> upstream_ids,
                             Metadata metadata = {},
                             std::optional<std::string> artifact_id = std::nullopt);
  std::string now() const;

 private:
  Clock clock_;
  std::optional<SeededRng> rng_;
};

struct ArtifactRef {
  std::string artifact_id;
  ArtifactKind kind = ArtifactKind::source_document;
  std::filesystem::path path;
};

struct SaveOptions {
  // Called after the temp file is fully written and before the rename.
  // Tests use it to simulate a crash.
  std::function<void(const std::filesystem::path& temp)> before_rename;
};

/// Canonical file text (sorted keys, 2-space indent, trailing newline).
std::string serialize_artifact(const AnyArtifact& artifact);
AnyArtifact parse_artifact(std::string_view text);

/// Validates and atomically writes the artifact under `store_root`. Upstream
/// ids that resolve inside the store are checked against the producing stage.
ArtifactRef save_artifact(const AnyArtifact& artifact, const std::filesystem::path& store_root,
                          const SaveOptions& options = {});

AnyArtifact load_artifact(const std::filesystem::path& path, ArtifactKind expected_kind);

template <class T>
T load_artifact_as(const std::filesystem::path& path) {
  return std::get<T>(load_artifact(path, T::kKind));
}

struct Lineage {
  /// Primary data path from a source document to the target, following the
  /// first upstream id at each step.
  std::vector<ArtifactHeader> chain;
  /// Full transitive upstream closure, topologically ordered (upstream first).
  std::vector<ArtifactHeader> closure;
};

class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(ArtifactKind kind, const std::string& id) const;

  ArtifactRef save(const AnyArtifact& artifact, const SaveOptions& options = {}) const;

  template <class T>
  T load(const std::string& id) const {
    return load_artifact_as<T>(path_for(T::kKind, id));
  }

  bool contains(ArtifactKind kind, const std::string& id) const;
  std::optional<ArtifactHeader> find_header(const std::string& id) const;
  std::optional<AnyArtifact> find(const std::string& id) const;
  std::vector<ArtifactHeader> list(ArtifactKind kind) const;

  /// Throws lineage_broken naming the first missing id.
  Lineage trace_lineage(const std::string& artifact_id) const;

 private:
  std::filesystem::path root_;
};

Lineage trace_lineage(const std::string& artifact_id, const std::filesystem::path& store_root);

}  // namespace ookb
