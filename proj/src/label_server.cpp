#include "ookb/label_server.h"

#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ookb/error.h"

namespace ookb {

using nlohmann::json;

struct LabelServer::Impl {
  Impl(ArtifactStore& s, LabelSession sess, ArtifactContext& c) : store(s), ctx(c), session(std::move(sess)), tracker(session) {}

  ArtifactStore& store;
  ArtifactContext& ctx;
  mutable std::mutex mutex;
  LabelSession session;
  AgreementTracker tracker;
  std::optional<std::string> consensus_id;
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  int status = 422;
  if (e.code() == ErrorCode::already_labeled) status = 409;
  if (e.category() == ErrorCategory::storage) status = 500;
  send_json(res, status, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    auto body = json::parse(req.body);
    if (body.is_object()) return body;
  } catch (const json::exception&) {
  }
  send_json(res, 400, {{"error", "bad-request"}, {"message", "body must be a JSON object"}});
  return std::nullopt;
}

json item_json(const LabelSession& s, const LabelItem& item, const std::string& annotator) {
  return {{"item_id", item.item_id},
          {"question", item.question},
          {"model_answer", item.model_answer},
          {"expected_answer", item.expected_answer ? json(*item.expected_answer) : json(nullptr)},
          {"evaluation_name", s.schema.evaluation_name},
          {"outcomes", s.schema.outcomes},
          {"progress", {{"labeled", labeled_count(s, annotator)}, {"total", s.items.size()}}}};
}

}  // namespace

LabelServer::LabelServer(ArtifactStore& store, LabelSession session, ArtifactContext& ctx,
                         std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store, std::move(session), ctx)) {
  auto& srv = impl_->server;
  Impl* self = impl_.get();

  srv.Get("/api/session", [self](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(self->mutex);
    auto body = session_summary(self->session, self->tracker.stats());
    if (self->consensus_id) body["consensus_id"] = *self->consensus_id;
    send_json(res, 200, body);
  });

  srv.Get("/api/next", [self](const httplib::Request& req, httplib::Response& res) {
    const auto annotator = req.get_param_value("annotator");
    if (annotator.empty()) {
      send_json(res, 400, {{"error", "bad-request"}, {"message", "annotator query parameter is required"}});
      return;
    }
    std::lock_guard lock(self->mutex);
    try {
      const LabelItem* item = next_item(self->session, annotator);
      if (!item) {
        res.status = 204;
        return;
      }
      send_json(res, 200, item_json(self->session, *item, annotator));
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  srv.Post("/api/labels", [self](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    std::lock_guard lock(self->mutex);
    try {
      const auto annotator = body->value("annotator", "");
      const auto item_id = body->value("item_id", "");
      const auto outcome = body->value("outcome", "");
      LabelSession updated = self->session;
      const auto stored = record_label(updated, annotator, item_id, outcome);
      self->store.save(updated);
      self->session = std::move(updated);
      self->tracker.on_label(annotator, item_id, stored);
      send_json(res, 201,
                {{"item_id", item_id},
                 {"annotator", annotator},
                 {"outcome", stored},
                 {"status", self->session.status == SessionStatus::complete ? "complete" : "open"},
                 {"agreement", to_json(self->tracker.stats())}});
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "bad-request"}, {"message", e.what()}});
    }
  });

  srv.Get("/api/agreement", [self](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(self->mutex);
    send_json(res, 200, to_json(self->tracker.stats()));
  });

  srv.Get("/api/disagreements", [self](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(self->mutex);
    try {
      send_json(res, 200, disagreement_details(self->session));
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  srv.Post("/api/consensus", [self](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    std::lock_guard lock(self->mutex);
    try {
      std::map<std::string, std::string> resolutions;
      if (body->contains("resolutions")) resolutions = body->at("resolutions").get<std::map<std::string, std::string>>();
      auto consensus = consensus_labels(self->session, resolutions, self->ctx);
      self->store.save(consensus);
      self->consensus_id = consensus.header.artifact_id;
      send_json(res, 201, {{"consensus_id", consensus.header.artifact_id}, {"consensus", consensus.consensus}});
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "bad-request"}, {"message", e.what()}});
    }
  });

  if (static_dir && std::filesystem::is_directory(*static_dir)) {
    srv.set_mount_point("/", static_dir->string());
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("Labeling API is running. The web UI bundle was not found; use the /api endpoints.\n",
                      "text/plain");
    });
  }
}

LabelServer::~LabelServer() { stop(); }

bool LabelServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int LabelServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool LabelServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void LabelServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void LabelServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

LabelSession LabelServer::snapshot() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->session;
}

std::optional<std::string> LabelServer::consensus_id() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->consensus_id;
}

}  // namespace ookb
