#include "atproto/http_api.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include <chrono>

#include "atproto/base32.hpp"
#include "atproto/varint.hpp"

namespace atproto::api {

using codec::Cid;
using codec::CidLink;
using codec::Value;
using json = nlohmann::json;

namespace {

json value_to_json_impl(const Value& v) {
  if (v.is_null()) return nullptr;
  if (v.is_bool()) return v.as_bool();
  if (v.is_int()) return v.as_int();
  if (v.is_string()) return v.as_string();
  if (v.is_bytes()) {
    json j;
    j["$bytes"] = "b" + base32::encode(v.as_bytes());
    return j;
  }
  if (v.is_link()) {
    json j;
    j["$link"] = v.as_link().str();
    return j;
  }
  if (v.is_array()) {
    json arr = json::array();
    for (const Value& item : v.as_array()) arr.push_back(value_to_json_impl(item));
    return arr;
  }
  json obj = json::object();
  for (const auto& [key, val] : v.as_map()) obj[key] = value_to_json_impl(val);
  return obj;
}

std::optional<Value> value_from_json_impl(const json& j) {
  if (j.is_null()) return Value(nullptr);
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer()) return Value(j.get<std::int64_t>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    Value::Array items;
    for (const auto& item : j) {
      auto v = value_from_json_impl(item);
      if (!v) return std::nullopt;
      items.push_back(std::move(*v));
    }
    return Value(std::move(items));
  }
  if (j.is_object()) {
    if (j.size() == 1 && j.contains("$link") && j["$link"].is_string()) {
      auto cid = Cid::parse(j["$link"].get<std::string>());
      if (!cid) return std::nullopt;
      return Value(CidLink{*cid});
    }
    if (j.size() == 1 && j.contains("$bytes") && j["$bytes"].is_string()) {
      std::string s = j["$bytes"];
      if (s.empty() || s[0] != 'b') return std::nullopt;
      auto raw = base32::decode(std::string_view(s).substr(1));
      if (!raw) return std::nullopt;
      return Value(std::move(*raw));
    }
    Value::Map m;
    for (const auto& [key, val] : j.items()) {
      auto v = value_from_json_impl(val);
      if (!v) return std::nullopt;
      m.emplace(key, std::move(*v));
    }
    return Value(std::move(m));
  }
  return std::nullopt;  // floats are outside the profile
}

void reply_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void reply_error(httplib::Response& res, const std::string& code, int status,
                 const std::string& detail = "") {
  json j;
  j["error"] = code;
  if (!detail.empty()) j["detail"] = detail;
  reply_json(res, j, status);
}

int status_for(const std::string& code) {
  if (code == "unauthorized" || code == "bad-credentials") return 401;
  if (code == "not-found" || code == "unknown-did" || code == "unknown-feed") return 404;
  if (code == "handle-taken") return 409;
  if (code == "too-old") return 410;
  if (code == "future-cursor" || code == "bad-cursor" || code == "lexicon-violation" ||
      code == "path-not-found" || code == "invalid-key") {
    return 400;
  }
  if (code == "takedown") return 451;
  return 500;
}

std::string bearer_token(const httplib::Request& req) {
  std::string auth = req.get_header_value("Authorization");
  if (auth.starts_with("Bearer ")) return auth.substr(7);
  return "";
}

json post_view_json(const appview::PostView& view) {
  json j;
  j["uri"] = view.uri;
  j["cid"] = view.cid.str();
  j["author"] = view.author;
  j["author_handle"] = view.author_handle;
  j["text"] = view.text;
  j["createdAt"] = view.created_at;
  j["likeCount"] = view.like_count;
  j["repostCount"] = view.repost_count;
  j["replyCount"] = view.reply_count;
  json images = json::array();
  for (const Cid& cid : view.images) images.push_back(cid.str());
  j["images"] = images;
  json labels = json::array();
  for (const auto& [src, val] : view.labels) {
    labels.push_back(json{{"src", src}, {"val", val}});
  }
  j["labels"] = labels;
  j["warn"] = view.warn;
  return j;
}

json thread_json(const appview::ThreadNode& node) {
  json j;
  j["post"] = post_view_json(node.post);
  json replies = json::array();
  for (const appview::ThreadNode& child : node.replies) replies.push_back(thread_json(child));
  j["replies"] = replies;
  return j;
}

// Shared stream writer: replays from the cursor, then tails the log until
// the client disconnects. Framing: uvarint length + DAG-CBOR event.
template <typename Log, typename Encode>
void stream_log(const Log& log, std::uint64_t cursor, const Encode& encode,
                httplib::Response& res) {
  auto state = std::make_shared<std::uint64_t>(cursor);
  res.set_chunked_content_provider(
      "application/octet-stream",
      [&log, state, encode](size_t, httplib::DataSink& sink) {
        for (int idle = 0; idle < 400; ++idle) {  // ~20s idle timeout
          auto read = log.read_after(*state, 64);
          if (read.status ==
              std::remove_reference_t<decltype(read)>::Status::TooOld) {
            return false;
          }
          if (!read.events.empty()) {
            Bytes out;
            for (const auto& event : read.events) {
              Bytes payload = encode(event);
              put_uvarint(out, payload.size());
              append(out, payload);
              *state = event.seq;
            }
            if (!sink.write(reinterpret_cast<const char*>(out.data()), out.size())) {
              return false;
            }
            idle = 0;
            continue;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        sink.done();
        return false;
      });
}

}  // namespace

std::string value_to_json(const Value& value) {
  return value_to_json_impl(value).dump();
}

std::optional<Value> value_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return value_from_json_impl(j);
}

struct HttpServer::Impl {
  explicit Impl(std::mutex& mu) : topology_mu(&mu) {}

  std::mutex* topology_mu;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  // staged migration payloads, keyed by did
  std::map<std::string, Bytes> staged_archives;
  std::map<std::string, std::vector<Bytes>> staged_blobs;
};

HttpServer::HttpServer(std::mutex& topology_mu) : impl_(std::make_unique<Impl>(topology_mu)) {}
HttpServer::~HttpServer() { stop(); }
HttpServer::HttpServer(HttpServer&&) noexcept = default;
HttpServer& HttpServer::operator=(HttpServer&&) noexcept = default;

int HttpServer::start(int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    impl_->server.bind_to_port("127.0.0.1", port);
    impl_->port = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpServer::stop() {
  if (!impl_) return;
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

int HttpServer::port() const { return impl_->port; }

void HttpServer::mount_directory(plc::PlcDirectory& directory) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;

  server.Get(R"(^/(did:plc:[a-z2-7]{24})$)",
             [mu, &directory](const httplib::Request& req, httplib::Response& res) {
               std::lock_guard lock(*mu);
               auto doc = directory.get_document(req.matches[1]);
               if (!doc) {
                 reply_error(res, "unknown-did", 404);
                 return;
               }
               res.set_content(identity::document_to_json(*doc), "application/json");
             });

  server.Get(R"(^/(did:plc:[a-z2-7]{24})/log/audit$)",
             [mu, &directory](const httplib::Request& req, httplib::Response& res) {
               std::lock_guard lock(*mu);
               auto log = directory.get_audit_log(req.matches[1]);
               if (!log) {
                 reply_error(res, "unknown-did", 404);
                 return;
               }
               res.set_content(plc::audit_log_to_json(*log), "application/json");
             });

  server.Post(R"(^/(did:plc:[a-z2-7]{24})$)",
              [mu, &directory](const httplib::Request& req, httplib::Response& res) {
                auto op = plc::operation_from_json(req.body);
                if (!op) {
                  reply_error(res, "malformed-operation", 400);
                  return;
                }
                std::lock_guard lock(*mu);
                auto result = directory.submit_operation(req.matches[1], *op);
                json j;
                j["accepted"] = result.accepted;
                if (!result.accepted) j["reason"] = result.reason;
                reply_json(res, j, result.accepted ? 200 : 400);
              });
}

void HttpServer::mount_pds(pds::Pds& service, appview::AppView* appview) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;
  auto* staged_archives = &impl_->staged_archives;
  auto* staged_blobs = &impl_->staged_blobs;

  server.Post("/account/create", [mu, &service](const httplib::Request& req,
                                                httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto did = service.create_account(body.value("handle", ""), body.value("password", ""));
    if (!did.ok()) return reply_error(res, did.error(), status_for(did.error()));
    auto session =
        service.create_session(body.value("handle", ""), body.value("password", ""));
    json j;
    j["did"] = did.value();
    if (session.ok()) j["token"] = session.value().token;
    reply_json(res, j);
  });

  server.Post("/session/create", [mu, &service](const httplib::Request& req,
                                                httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto session = service.create_session(body.value("identifier", ""),
                                          body.value("password", ""));
    if (!session.ok()) return reply_error(res, session.error(), status_for(session.error()));
    json j;
    j["did"] = session.value().did;
    j["token"] = session.value().token;
    reply_json(res, j);
  });

  server.Post("/records/apply", [mu, &service](const httplib::Request& req,
                                               httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("writes") || !body["writes"].is_array()) {
      return reply_error(res, "malformed-request", 400);
    }
    std::vector<pds::WriteRequest> writes;
    for (const auto& w : body["writes"]) {
      pds::WriteRequest request;
      std::string action = w.value("action", "create");
      request.action = action == "delete"  ? pds::WriteRequest::Action::Delete
                       : action == "update" ? pds::WriteRequest::Action::Update
                                            : pds::WriteRequest::Action::Create;
      request.collection = w.value("collection", "");
      if (w.contains("rkey")) request.rkey = w["rkey"].get<std::string>();
      if (w.contains("record")) {
        auto value = value_from_json_impl(w["record"]);
        if (!value) return reply_error(res, "malformed-record", 400);
        request.record = std::move(*value);
      }
      writes.push_back(std::move(request));
    }
    std::lock_guard lock(*mu);
    auto result = service.write_records(bearer_token(req), writes);
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    json j;
    j["commit"] = result.value().commit.str();
    j["seq"] = result.value().seq;
    j["paths"] = result.value().paths;
    reply_json(res, j);
  });

  server.Get("/events", [&service](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t cursor = std::stoull(req.get_param_value("cursor").empty()
                                           ? "0"
                                           : req.get_param_value("cursor"));
    size_t max = req.has_param("max") ? std::stoul(req.get_param_value("max")) : 64;
    auto read = service.event_log().read_after(cursor, max);
    using Status = events::EventLog<events::RepoEvent>::ReadResult::Status;
    if (read.status == Status::TooOld) return reply_error(res, "too-old", 410);
    if (read.status == Status::FutureCursor) return reply_error(res, "future-cursor", 400);
    Bytes out;
    for (const events::RepoEvent& event : read.events) events::frame_event(out, event);
    res.set_content(std::string(out.begin(), out.end()), "application/octet-stream");
  });

  server.Get("/events/stream", [&service](const httplib::Request& req,
                                          httplib::Response& res) {
    std::uint64_t cursor = req.has_param("cursor")
                               ? std::stoull(req.get_param_value("cursor"))
                               : service.event_log().head_seq();
    stream_log(service.event_log(), cursor,
               [](const events::RepoEvent& e) { return events::encode_event(e); }, res);
  });

  server.Get("/sync/repos", [mu, &service](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(*mu);
    json arr = json::array();
    for (const auto& [did, head] : service.sync_list_repos()) {
      arr.push_back(json{{"did", did}, {"head", head.str()}});
    }
    reply_json(res, arr);
  });

  server.Get(R"(^/sync/repo/(did:.+)$)", [mu, &service](const httplib::Request& req,
                                                        httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto archive = service.sync_get_repo(req.matches[1]);
    if (!archive.ok()) return reply_error(res, archive.error(), 404);
    res.set_content(std::string(archive.value().begin(), archive.value().end()),
                    "application/octet-stream");
  });

  server.Post("/blobs", [mu, &service](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto cid = service.put_blob(bearer_token(req), Bytes(req.body.begin(), req.body.end()));
    if (!cid.ok()) return reply_error(res, cid.error(), status_for(cid.error()));
    reply_json(res, json{{"cid", cid.value().str()}});
  });

  server.Get(R"(^/blobs/(did:[^/]+)/(b[a-z2-7]+)$)",
             [mu, &service](const httplib::Request& req, httplib::Response& res) {
               auto cid = Cid::parse(std::string(req.matches[2]));
               if (!cid) return reply_error(res, "not-found", 404);
               std::lock_guard lock(*mu);
               auto blob = service.get_blob(req.matches[1], *cid);
               if (!blob.ok()) return reply_error(res, blob.error(), 404);
               res.set_content(std::string(blob.value().begin(), blob.value().end()),
                               "application/octet-stream");
             });

  server.Post("/migration/prepare", [mu, &service](const httplib::Request& req,
                                                   httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto key = service.prepare_migration(body.value("did", ""), body.value("handle", ""),
                                         body.value("password", ""));
    if (!key.ok()) return reply_error(res, key.error(), status_for(key.error()));
    reply_json(res, json{{"signing_key", key.value()}});
  });

  server.Post("/migration/import", [mu, staged_archives](const httplib::Request& req,
                                                         httplib::Response& res) {
    std::string did = req.get_param_value("did");
    if (did.empty()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    (*staged_archives)[did] = Bytes(req.body.begin(), req.body.end());
    reply_json(res, json{{"ok", true}});
  });

  server.Post("/migration/blob", [mu, staged_blobs](const httplib::Request& req,
                                                    httplib::Response& res) {
    std::string did = req.get_param_value("did");
    if (did.empty()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    (*staged_blobs)[did].push_back(Bytes(req.body.begin(), req.body.end()));
    reply_json(res, json{{"ok", true}});
  });

  server.Post("/migration/commit",
              [mu, &service, staged_archives, staged_blobs](const httplib::Request& req,
                                                            httplib::Response& res) {
                json body = json::parse(req.body, nullptr, false);
                if (body.is_discarded() || !body.contains("op")) {
                  return reply_error(res, "malformed-request", 400);
                }
                auto op = plc::operation_from_json(body["op"].dump());
                if (!op) return reply_error(res, "malformed-operation", 400);
                std::string did = body.value("did", "");
                std::lock_guard lock(*mu);
                auto archive = staged_archives->find(did);
                if (archive == staged_archives->end()) {
                  return reply_error(res, "import-failed", 400, "no staged archive");
                }
                std::vector<Bytes> blobs;
                if (auto it = staged_blobs->find(did); it != staged_blobs->end()) {
                  blobs = it->second;
                }
                auto moved = service.migrate_in(did, archive->second, blobs, *op,
                                                body.value("rotation_secret", ""));
                staged_archives->erase(did);
                staged_blobs->erase(did);
                if (!moved.ok()) {
                  return reply_error(res, moved.error(), status_for(moved.error()),
                                     moved.detail());
                }
                reply_json(res, json{{"ok", true}});
              });

  server.Get("/account/export", [mu, &service](const httplib::Request& req,
                                               httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto kit = service.export_account(bearer_token(req));
    if (!kit.ok()) return reply_error(res, kit.error(), status_for(kit.error()));
    json j;
    j["did"] = kit.value().did;
    j["handle"] = kit.value().handle;
    j["archive"] = "b" + base32::encode(kit.value().archive);
    json blobs = json::array();
    for (const Bytes& blob : kit.value().blobs) blobs.push_back("b" + base32::encode(blob));
    j["blobs"] = blobs;
    j["rotation_secret"] = kit.value().rotation_secret;
    reply_json(res, j);
  });

  server.Post("/account/deactivate", [mu, &service](const httplib::Request& req,
                                                    httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto token_did = service.session_did(bearer_token(req));
    std::string did = body.value("did", "");
    if (!token_did || *token_did != did) return reply_error(res, "unauthorized", 401);
    auto result = service.deactivate_account(did);
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    reply_json(res, json{{"ok", true}});
  });

  server.Post("/prefs/mute", [mu, &service](const httplib::Request& req,
                                            httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto result = service.set_mute(bearer_token(req), body.value("subject", ""),
                                   body.value("on", true));
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    reply_json(res, json{{"ok", true}});
  });

  server.Post("/prefs/label", [mu, &service](const httplib::Request& req,
                                             httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto result = service.set_label_pref(bearer_token(req), body.value("value", ""),
                                         body.value("pref", "show"));
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    reply_json(res, json{{"ok", true}});
  });

  server.Post("/prefs/labeler", [mu, &service](const httplib::Request& req,
                                               httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto result = service.set_labeler_subscription(bearer_token(req),
                                                   body.value("did", ""),
                                                   body.value("on", true));
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    reply_json(res, json{{"ok", true}});
  });

  if (appview) {
    // Client reads go to the PDS, which queries the app view with the
    // caller's private viewer context attached.
    server.Get("/read/timeline", [mu, &service, appview](const httplib::Request& req,
                                                         httplib::Response& res) {
      std::lock_guard lock(*mu);
      auto ctx = service.viewer_context(bearer_token(req));
      if (!ctx.ok()) return reply_error(res, ctx.error(), 401);
      std::optional<std::string> cursor;
      if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
      size_t limit = req.has_param("limit") ? std::stoul(req.get_param_value("limit")) : 50;
      auto page = appview->get_timeline(ctx.value().did, ctx.value(), cursor, limit);
      if (!page.ok()) return reply_error(res, page.error(), status_for(page.error()));
      json j;
      json items = json::array();
      for (const appview::TimelineItem& item : page.value().items) {
        json entry;
        entry["post"] = post_view_json(item.post);
        if (item.reposted_by) entry["repostedBy"] = *item.reposted_by;
        items.push_back(entry);
      }
      j["items"] = items;
      if (page.value().cursor) j["cursor"] = *page.value().cursor;
      reply_json(res, j);
    });

    server.Get("/read/thread", [mu, &service, appview](const httplib::Request& req,
                                                       httplib::Response& res) {
      std::lock_guard lock(*mu);
      auto ctx = service.viewer_context(bearer_token(req));
      if (!ctx.ok()) return reply_error(res, ctx.error(), 401);
      auto thread = appview->get_thread(req.get_param_value("uri"), ctx.value());
      if (!thread.ok()) return reply_error(res, thread.error(), status_for(thread.error()));
      reply_json(res, thread_json(thread.value()));
    });
  }
}

void HttpServer::mount_relay(relay::Relay& service) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;

  server.Post("/register", [mu, &service](const httplib::Request& req,
                                          httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("url")) {
      return reply_error(res, "malformed-request", 400);
    }
    auto client = make_http_pds_client(body["url"]);
    std::lock_guard lock(*mu);
    auto result = service.register_pds(client);
    if (!result.ok()) return reply_error(res, result.error(), 502, result.detail());
    reply_json(res, json{{"ok", true}});
  });

  server.Get("/events", [&service](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t cursor = req.has_param("cursor")
                               ? std::stoull(req.get_param_value("cursor"))
                               : 0;
    size_t max = req.has_param("max") ? std::stoul(req.get_param_value("max")) : 64;
    auto read = service.firehose().read_after(cursor, max);
    using Status = events::EventLog<relay::FirehoseEvent>::ReadResult::Status;
    if (read.status == Status::TooOld) return reply_error(res, "too-old", 410);
    if (read.status == Status::FutureCursor) return reply_error(res, "future-cursor", 400);
    Bytes out;
    for (const relay::FirehoseEvent& event : read.events) {
      Bytes payload = relay::encode_firehose_event(event);
      put_uvarint(out, payload.size());
      append(out, payload);
    }
    res.set_content(std::string(out.begin(), out.end()), "application/octet-stream");
  });

  server.Get("/events/stream", [&service](const httplib::Request& req,
                                          httplib::Response& res) {
    std::uint64_t cursor = req.has_param("cursor")
                               ? std::stoull(req.get_param_value("cursor"))
                               : service.firehose().head_seq();
    stream_log(service.firehose(), cursor,
               [](const relay::FirehoseEvent& e) { return relay::encode_firehose_event(e); },
               res);
  });

  server.Get(R"(^/replica/(did:.+)$)", [mu, &service](const httplib::Request& req,
                                                      httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto archive = service.replica_archive(req.matches[1]);
    if (!archive.ok()) return reply_error(res, archive.error(), 404);
    res.set_content(std::string(archive.value().begin(), archive.value().end()),
                    "application/octet-stream");
  });

  server.Get("/stats", [mu, &service](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(*mu);
    json j = json::object();
    for (const auto& [key, value] : service.metrics()) j[key] = value;
    reply_json(res, j);
  });
}

void HttpServer::mount_appview(appview::AppView& service,
                               std::function<ViewerContext(const std::string&)> ctx_provider) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;
  auto provider = std::make_shared<std::function<ViewerContext(const std::string&)>>(
      std::move(ctx_provider));

  auto viewer_of = [provider](const httplib::Request& req) {
    std::string viewer = req.get_param_value("viewer");
    if (viewer.empty() || !*provider) return ViewerContext{};
    return (*provider)(viewer);
  };

  server.Get("/thread", [mu, &service, viewer_of](const httplib::Request& req,
                                                  httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto thread = service.get_thread(req.get_param_value("uri"), viewer_of(req));
    if (!thread.ok()) return reply_error(res, thread.error(), status_for(thread.error()));
    reply_json(res, thread_json(thread.value()));
  });

  server.Get("/post", [mu, &service, viewer_of](const httplib::Request& req,
                                                httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto post = service.get_post(req.get_param_value("uri"), viewer_of(req));
    if (!post.ok()) return reply_error(res, post.error(), status_for(post.error()));
    reply_json(res, post_view_json(post.value()));
  });

  server.Get("/timeline", [mu, &service, viewer_of](const httplib::Request& req,
                                                    httplib::Response& res) {
    std::lock_guard lock(*mu);
    std::optional<std::string> cursor;
    if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
    size_t limit = req.has_param("limit") ? std::stoul(req.get_param_value("limit")) : 50;
    auto page = service.get_timeline(req.get_param_value("viewer"), viewer_of(req), cursor,
                                     limit);
    if (!page.ok()) return reply_error(res, page.error(), status_for(page.error()));
    json j;
    json items = json::array();
    for (const appview::TimelineItem& item : page.value().items) {
      json entry;
      entry["post"] = post_view_json(item.post);
      if (item.reposted_by) entry["repostedBy"] = *item.reposted_by;
      items.push_back(entry);
    }
    j["items"] = items;
    if (page.value().cursor) j["cursor"] = *page.value().cursor;
    reply_json(res, j);
  });

  server.Get("/profile", [mu, &service](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto profile = service.get_profile(req.get_param_value("did"));
    if (!profile.ok()) return reply_error(res, profile.error(), status_for(profile.error()));
    json j;
    j["did"] = profile.value().did;
    j["handle"] = profile.value().handle;
    j["displayName"] = profile.value().display_name;
    j["description"] = profile.value().description;
    j["followersCount"] = profile.value().followers_count;
    j["followsCount"] = profile.value().follows_count;
    j["postsCount"] = profile.value().posts_count;
    j["handleState"] = profile.value().handle_state;
    reply_json(res, j);
  });

  server.Get("/followers", [mu, &service](const httplib::Request& req,
                                          httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto followers = service.get_followers(req.get_param_value("did"));
    if (!followers.ok()) {
      return reply_error(res, followers.error(), status_for(followers.error()));
    }
    reply_json(res, json(followers.value()));
  });

  server.Get("/likes", [mu, &service](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto likes = service.get_likes(req.get_param_value("uri"));
    if (!likes.ok()) return reply_error(res, likes.error(), status_for(likes.error()));
    reply_json(res, json(likes.value()));
  });

  server.Get("/feed", [mu, &service, viewer_of](const httplib::Request& req,
                                                httplib::Response& res) {
    std::lock_guard lock(*mu);
    std::optional<std::string> cursor;
    if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
    size_t limit = req.has_param("limit") ? std::stoul(req.get_param_value("limit")) : 30;
    auto page =
        service.get_feed(req.get_param_value("feed"), viewer_of(req), cursor, limit);
    if (!page.ok()) return reply_error(res, page.error(), 502);
    json j;
    json posts = json::array();
    for (const appview::PostView& post : page.value().posts) {
      posts.push_back(post_view_json(post));
    }
    j["posts"] = posts;
    if (page.value().cursor) j["cursor"] = *page.value().cursor;
    reply_json(res, j);
  });

  server.Get("/handle/status", [mu, &service](const httplib::Request& req,
                                              httplib::Response& res) {
    std::lock_guard lock(*mu);
    auto status = service.handle_status(req.get_param_value("did"));
    json j;
    j["did"] = status.did;
    j["handle"] = status.handle;
    switch (status.state) {
      case identity::HandleStatus::State::Verified: j["state"] = "verified"; break;
      case identity::HandleStatus::State::Invalid: j["state"] = "invalid"; break;
      case identity::HandleStatus::State::Unchecked: j["state"] = "unchecked"; break;
    }
    j["reason"] = status.reason;
    reply_json(res, j);
  });

  server.Post("/admin/takedown", [mu, &service](const httplib::Request& req,
                                                httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return reply_error(res, "malformed-request", 400);
    std::lock_guard lock(*mu);
    auto result = service.admin_takedown(req.get_header_value("X-Operator-Token"),
                                         body.value("subject", ""), body.value("on", true));
    if (!result.ok()) return reply_error(res, result.error(), status_for(result.error()));
    reply_json(res, json{{"ok", true}});
  });

  server.Get("/blob", [mu, &service](const httplib::Request& req, httplib::Response& res) {
    auto cid = Cid::parse(req.get_param_value("cid"));
    if (!cid) return reply_error(res, "not-found", 404);
    std::lock_guard lock(*mu);
    auto blob = service.get_blob(req.get_param_value("did"), *cid);
    if (!blob.ok() || !blob.value()) return reply_error(res, "not-found", 404);
    res.set_content(std::string(blob.value()->begin(), blob.value()->end()),
                    "application/octet-stream");
  });
}

void HttpServer::mount_labeler(feeds::Labeler& service) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;

  server.Get("/labels", [mu, &service](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t cursor = req.has_param("cursor")
                               ? std::stoull(req.get_param_value("cursor"))
                               : 0;
    size_t max = req.has_param("max") ? std::stoul(req.get_param_value("max")) : 100;
    std::lock_guard lock(*mu);
    auto read = service.log().read_after(cursor, max);
    json arr = json::array();
    for (const labels::Label& label : read.events) {
      arr.push_back(json::parse(labels::label_to_json(label)));
    }
    reply_json(res, arr);
  });

  server.Get("/did", [mu, &service](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lock(*mu);
    reply_json(res, json{{"did", service.did()}});
  });
}

void HttpServer::mount_feedgen(feeds::FeedGenerator& service) {
  auto* mu = impl_->topology_mu;
  auto& server = impl_->server;

  server.Get("/skeleton", [mu, &service](const httplib::Request& req,
                                         httplib::Response& res) {
    std::optional<std::string> cursor;
    if (req.has_param("cursor")) cursor = req.get_param_value("cursor");
    size_t limit = req.has_param("limit") ? std::stoul(req.get_param_value("limit")) : 30;
    std::lock_guard lock(*mu);
    auto skeleton = service.get_skeleton(req.get_param_value("feed"), cursor, limit);
    if (!skeleton.ok()) {
      return reply_error(res, skeleton.error(), status_for(skeleton.error()));
    }
    json j;
    j["feed"] = skeleton.value().feed_uri;
    j["posts"] = skeleton.value().post_uris;
    if (skeleton.value().cursor) j["cursor"] = *skeleton.value().cursor;
    reply_json(res, j);
  });
}

// --- HTTP clients -----------------------------------------------------------

struct HttpDirectoryClient::Impl {
  explicit Impl(std::string base) : client(base) { client.set_read_timeout(5, 0); }
  httplib::Client client;
};

HttpDirectoryClient::HttpDirectoryClient(std::string base_url)
    : impl_(std::make_unique<Impl>(std::move(base_url))) {}
HttpDirectoryClient::~HttpDirectoryClient() = default;

std::optional<std::vector<identity::PlcOperation>> HttpDirectoryClient::fetch_audit_log(
    const std::string& did) {
  auto res = impl_->client.Get("/" + did + "/log/audit");
  if (!res || res->status != 200) return std::nullopt;
  return plc::audit_log_from_json(res->body);
}

namespace {

class HttpPdsClient : public relay::PdsClient {
 public:
  explicit HttpPdsClient(std::string base_url)
      : base_(std::move(base_url)), client_(base_) {
    client_.set_read_timeout(5, 0);
    client_.set_connection_timeout(2, 0);
  }

  std::string url() const override { return base_; }

  bool reachable() const override {
    auto res = const_cast<httplib::Client&>(client_).Get("/sync/repos");
    return res && res->status == 200;
  }

  std::optional<std::vector<std::pair<std::string, Cid>>> list_repos() override {
    auto res = client_.Get("/sync/repos");
    if (!res || res->status != 200) return std::nullopt;
    json arr = json::parse(res->body, nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) return std::nullopt;
    std::vector<std::pair<std::string, Cid>> out;
    for (const auto& item : arr) {
      auto cid = Cid::parse(item.value("head", ""));
      if (!cid) return std::nullopt;
      out.emplace_back(item.value("did", ""), *cid);
    }
    return out;
  }

  std::optional<Bytes> fetch_repo(const std::string& did) override {
    auto res = client_.Get("/sync/repo/" + did);
    if (!res || res->status != 200) return std::nullopt;
    return Bytes(res->body.begin(), res->body.end());
  }

  Pull pull_events(std::uint64_t cursor, size_t max) override {
    Pull out;
    auto res = client_.Get("/events?cursor=" + std::to_string(cursor) +
                           "&max=" + std::to_string(max));
    if (!res) {
      out.status = Pull::Status::Unreachable;
      return out;
    }
    if (res->status == 410) {
      out.status = Pull::Status::TooOld;
      return out;
    }
    if (res->status != 200) {
      out.status = Pull::Status::Ok;  // future cursor: nothing yet
      return out;
    }
    Bytes data(res->body.begin(), res->body.end());
    size_t pos = 0;
    while (pos < data.size()) {
      auto event = events::read_framed_event(data, pos);
      if (!event) break;
      out.events.push_back(std::move(*event));
    }
    return out;
  }

  std::uint64_t head_seq() override {
    // cursor discovery: a future cursor probe is cheap and avoids a
    // dedicated endpoint
    auto res = client_.Get("/events?cursor=0&max=1");
    if (!res || res->status != 200) return 0;
    Bytes data(res->body.begin(), res->body.end());
    size_t pos = 0;
    std::uint64_t head = 0;
    auto event = events::read_framed_event(data, pos);
    if (event) head = event->seq;
    while (true) {
      auto more = client_.Get("/events?cursor=" + std::to_string(head) + "&max=64");
      if (!more || more->status != 200) break;
      Bytes chunk(more->body.begin(), more->body.end());
      if (chunk.empty()) break;
      size_t p = 0;
      bool advanced = false;
      while (p < chunk.size()) {
        auto e = events::read_framed_event(chunk, p);
        if (!e) break;
        head = e->seq;
        advanced = true;
      }
      if (!advanced) break;
    }
    return head;
  }

 private:
  std::string base_;
  httplib::Client client_;
};

}  // namespace

std::shared_ptr<relay::PdsClient> make_http_pds_client(const std::string& base_url) {
  return std::make_shared<HttpPdsClient>(base_url);
}

// --- serve topology ---------------------------------------------------------

ServeTopology::ServeTopology(sim::SimConfig config, int base_port)
    : cfg_(config), base_port_(base_port), sim_(config) {}

ServeTopology::~ServeTopology() { stop(); }

void ServeTopology::start() {
  int next_port = base_port_;
  auto add_server = [&](auto mount) {
    auto server = std::make_unique<HttpServer>(mu_);
    mount(*server);
    int port = server->start(next_port == 0 ? 0 : next_port);
    ports_.push_back(port);
    if (next_port != 0) ++next_port;
    servers_.push_back(std::move(server));
  };

  add_server([&](HttpServer& s) { s.mount_directory(sim_.directory()); });
  for (int i = 0; i < cfg_.topology.pdses; ++i) {
    add_server([&](HttpServer& s) { s.mount_pds(sim_.pds(i), &sim_.appview()); });
  }
  add_server([&](HttpServer& s) { s.mount_relay(sim_.relay(0)); });
  add_server([&](HttpServer& s) {
    s.mount_appview(sim_.appview(), [this](const std::string& did) {
      for (int i = 0; i < sim_.pds_count(); ++i) {
        if (sim_.pds(i).account(did)) return sim_.pds(i).viewer_context_for_did(did);
      }
      ViewerContext ctx;
      ctx.did = did;
      return ctx;
    });
  });
  for (int i = 0; i < cfg_.topology.labelers; ++i) {
    add_server([&](HttpServer& s) { s.mount_labeler(sim_.labeler(i)); });
  }
  for (int i = 0; i < cfg_.topology.feedgens; ++i) {
    add_server([&](HttpServer& s) { s.mount_feedgen(sim_.feedgen(i)); });
  }

  running_ = true;
  pump_thread_ = std::make_unique<std::thread>([this] {
    while (running_) {
      {
        std::lock_guard lock(mu_);
        sim_.clock().advance_micros(50'000);
        sim_.settle();
        sim_.appview().on_tick();
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
}

void ServeTopology::stop() {
  if (running_.exchange(false) && pump_thread_ && pump_thread_->joinable()) {
    pump_thread_->join();
  }
  pump_thread_.reset();
  for (auto& server : servers_) server->stop();
  servers_.clear();
}

int ServeTopology::directory_port() const { return ports_.at(0); }
int ServeTopology::pds_port(int index) const { return ports_.at(1 + static_cast<size_t>(index)); }
int ServeTopology::relay_port() const {
  return ports_.at(1 + static_cast<size_t>(cfg_.topology.pdses));
}
int ServeTopology::appview_port() const {
  return ports_.at(2 + static_cast<size_t>(cfg_.topology.pdses));
}
int ServeTopology::labeler_port(int index) const {
  return ports_.at(3 + static_cast<size_t>(cfg_.topology.pdses + index));
}
int ServeTopology::feedgen_port(int index) const {
  return ports_.at(3 + static_cast<size_t>(cfg_.topology.pdses + cfg_.topology.labelers + index));
}

std::string ServeTopology::port_map() const {
  std::string out;
  out += "directory: http://127.0.0.1:" + std::to_string(directory_port()) + "\n";
  for (int i = 0; i < cfg_.topology.pdses; ++i) {
    out += "pds" + std::to_string(i + 1) + ": http://127.0.0.1:" +
           std::to_string(pds_port(i)) + "\n";
  }
  out += "relay: http://127.0.0.1:" + std::to_string(relay_port()) + "\n";
  out += "appview: http://127.0.0.1:" + std::to_string(appview_port()) + "\n";
  for (int i = 0; i < cfg_.topology.labelers; ++i) {
    out += "labeler" + std::to_string(i + 1) + ": http://127.0.0.1:" +
           std::to_string(labeler_port(i)) + "\n";
  }
  for (int i = 0; i < cfg_.topology.feedgens; ++i) {
    out += "feedgen" + std::to_string(i + 1) + ": http://127.0.0.1:" +
           std::to_string(feedgen_port(i)) + "\n";
  }
  return out;
}

}  // namespace atproto::api
