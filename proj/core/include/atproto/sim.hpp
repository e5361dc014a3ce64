#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "atproto/appview.hpp"
#include "atproto/consistency.hpp"
#include "atproto/labeler.hpp"
#include "atproto/pds.hpp"
#include "atproto/relay.hpp"

namespace atproto::sim {

struct Topology {
  int pdses = 1;
  int relays = 1;
  int labelers = 0;
  int feedgens = 0;
};

struct SimConfig {
  Topology topology;
  std::uint64_t seed = 1;
  size_t pds_retention = 10'000;
  size_t firehose_retention = 10'000;
  std::string password_profile = "fast";
};

// The whole federation in one process: faked DNS/HTTPS, a virtual clock,
// and a seeded entropy source. Identical config and seed reproduce every
// byte of every assertion.
class Simulation {
 public:
  explicit Simulation(SimConfig config);

  VirtualClock& clock() { return clock_; }
  net::FakeNet& net() { return net_; }
  plc::PlcDirectory& directory() { return directory_; }
  identity::DirectoryClient& directory_client() { return directory_client_; }
  pds::Pds& pds(int index) { return *pdses_.at(static_cast<size_t>(index)).service; }
  int pds_count() const { return static_cast<int>(pdses_.size()); }
  relay::Relay& relay(int index = 0) { return *relays_.at(static_cast<size_t>(index)); }
  appview::AppView& appview() { return *appview_; }
  feeds::Labeler& labeler(int index = 0) { return *labelers_.at(static_cast<size_t>(index)); }
  int labeler_count() const { return static_cast<int>(labelers_.size()); }
  feeds::FeedGenerator& feedgen(int index = 0) {
    return *feedgens_.at(static_cast<size_t>(index));
  }

  Bytes entropy(size_t n);

  // fault injection
  void kill_pds(int index);
  void restore_pds(int index);
  void partition_pds(int index);
  void heal_pds(int index);
  bool pds_alive(int index) const { return pdses_.at(static_cast<size_t>(index)).alive; }
  bool pds_alive_and_connected(int index) const {
    const PdsSlot& slot = pdses_.at(static_cast<size_t>(index));
    return slot.alive && !slot.partitioned;
  }
  void set_feedgen_unavailable(bool value) { feedgen_unavailable_ = value; }

  // drives every service until no events remain in flight
  void settle();
  void tick(std::int64_t micros);

  identity::ResolverEnv resolver_env();

  // Self-owned service identity (labelers, feed generators).
  std::pair<std::string, crypto::KeyPair> make_service_identity(const std::string& handle);

  int pds_index_by_url(const std::string& url) const;

 private:
  SimConfig cfg_;
  std::mt19937_64 rng_;
  VirtualClock clock_;
  net::FakeNet net_;
  plc::PlcDirectory directory_;
  plc::LocalDirectoryClient directory_client_;

  struct PdsSlot {
    std::unique_ptr<pds::Pds> service;
    bool alive = true;
    bool partitioned = false;
  };
  std::vector<PdsSlot> pdses_;
  std::vector<std::unique_ptr<relay::Relay>> relays_;
  std::unique_ptr<appview::AppView> appview_;
  std::vector<std::unique_ptr<feeds::Labeler>> labelers_;
  std::vector<std::unique_ptr<feeds::FeedGenerator>> feedgens_;

  std::unique_ptr<events::Subscription<relay::FirehoseEvent>> appview_sub_;
  std::vector<std::unique_ptr<events::Subscription<relay::FirehoseEvent>>> labeler_subs_;
  std::vector<std::unique_ptr<events::Subscription<relay::FirehoseEvent>>> feedgen_subs_;
  std::vector<std::unique_ptr<events::Subscription<labels::Label>>> label_subs_;
  bool feedgen_unavailable_ = false;
};

// --- scenario files -------------------------------------------------------
//
// Plain structured text, one action per line: `verb key=value key="value"`.
// `#` starts a comment. `topology` and `seed` lines configure the run.

struct ScenarioAction {
  std::string verb;
  std::map<std::string, std::string> args;
  int line = 0;
};

struct Scenario {
  Topology topology;
  std::uint64_t seed = 1;
  std::vector<ScenarioAction> actions;
};

class ScenarioParseError : public std::runtime_error {
 public:
  ScenarioParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);

struct ScenarioReport {
  bool passed = true;
  int assertions = 0;
  int failures = 0;
  std::string text;  // byte-identical across runs with equal seeds
};

ScenarioReport run_scenario(const Scenario& scenario,
                            std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace atproto::sim
