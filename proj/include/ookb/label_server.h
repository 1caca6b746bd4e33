// Local HTTP API over one label session. Mutations are applied one at a time
// and the session is checkpointed to the store after each of them.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ookb/artifact_store.h"
#include "ookb/labeling.h"

namespace ookb {

inline constexpr const char* kDefaultLabelHost = "127.0.0.1";
inline constexpr int kDefaultLabelPort = 8787;

class LabelServer {
 public:
  LabelServer(ArtifactStore& store, LabelSession session, ArtifactContext& ctx,
              std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~LabelServer();
  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  /// Binds and serves until stop(). Returns false if the bind fails.
  bool listen(const std::string& host = kDefaultLabelHost, int port = kDefaultLabelPort);
  /// Binds an ephemeral port; serve with listen_after_bind().
  int bind_any_port(const std::string& host = kDefaultLabelHost);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

  LabelSession snapshot() const;
  std::optional<std::string> consensus_id() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ookb
