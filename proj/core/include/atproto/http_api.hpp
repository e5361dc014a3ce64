#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "atproto/sim.hpp"

namespace atproto::api {

// JSON rendering of codec values: bytes as {"$bytes": "b..."} and CID links
// as {"$link": "b..."}; everything else maps directly.
std::string value_to_json(const codec::Value& value);
std::optional<codec::Value> value_from_json(const std::string& text);

// One HTTP listener hosting the mounted services. Handlers serialize on the
// shared topology mutex; stream endpoints poll the (internally locked)
// event logs instead of holding it.
class HttpServer {
 public:
  explicit HttpServer(std::mutex& topology_mu);
  ~HttpServer();
  HttpServer(HttpServer&&) noexcept;
  HttpServer& operator=(HttpServer&&) noexcept;

  void mount_directory(plc::PlcDirectory& directory);
  void mount_pds(pds::Pds& service, appview::AppView* appview);
  void mount_relay(relay::Relay& service);
  void mount_appview(appview::AppView& service,
                     std::function<ViewerContext(const std::string&)> ctx_provider);
  void mount_labeler(feeds::Labeler& service);
  void mount_feedgen(feeds::FeedGenerator& service);

  // Binds 127.0.0.1 and serves from a background thread. port 0 picks one.
  int start(int port = 0);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// DirectoryClient over the directory's HTTP surface.
class HttpDirectoryClient : public identity::DirectoryClient {
 public:
  explicit HttpDirectoryClient(std::string base_url);
  ~HttpDirectoryClient() override;
  std::optional<std::vector<identity::PlcOperation>> fetch_audit_log(
      const std::string& did) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// relay::PdsClient over the PDS HTTP surface; lets a relay crawl a PDS in
// another process.
std::shared_ptr<relay::PdsClient> make_http_pds_client(const std::string& base_url);

// The whole simulated topology behind real HTTP listeners, plus a pump
// thread that keeps events flowing. Ports are assigned sequentially from
// base_port: directory, pds1..N, relay, appview, labelers, feedgens.
class ServeTopology {
 public:
  ServeTopology(sim::SimConfig config, int base_port);
  ~ServeTopology();

  void start();
  void stop();

  sim::Simulation& simulation() { return sim_; }
  std::mutex& mu() { return mu_; }

  int directory_port() const;
  int pds_port(int index) const;
  int relay_port() const;
  int appview_port() const;
  int labeler_port(int index) const;
  int feedgen_port(int index) const;
  std::string port_map() const;

 private:
  sim::SimConfig cfg_;
  int base_port_;
  std::mutex mu_;
  sim::Simulation sim_;
  std::vector<std::unique_ptr<HttpServer>> servers_;
  std::vector<int> ports_;
  std::unique_ptr<std::thread> pump_thread_;
  std::atomic<bool> running_{false};
};

}  // namespace atproto::api
