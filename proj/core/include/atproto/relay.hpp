#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "atproto/clock.hpp"
#include "atproto/events.hpp"
#include "atproto/identity.hpp"
#include "atproto/outcome.hpp"

namespace atproto::relay {

// Firehose entry: the origin event plus the relay-assigned global sequence.
// Only verified events are ever emitted.
struct FirehoseEvent {
  std::uint64_t seq = 0;
  events::RepoEvent origin;
  bool verified = true;
};

Bytes encode_firehose_event(const FirehoseEvent& event);
std::optional<FirehoseEvent> decode_firehose_event(BytesView data);

// Transport to one PDS; the simulator wires an in-process adapter, the CLI
// an HTTP one. Unreachability models partitions and dead hosts.
class PdsClient {
 public:
  virtual ~PdsClient() = default;
  virtual std::string url() const = 0;
  virtual bool reachable() const = 0;
  virtual std::optional<std::vector<std::pair<std::string, codec::Cid>>> list_repos() = 0;
  virtual std::optional<Bytes> fetch_repo(const std::string& did) = 0;

  struct Pull {
    enum class Status { Ok, TooOld, Unreachable };
    Status status = Status::Ok;
    std::vector<events::RepoEvent> events;
  };
  virtual Pull pull_events(std::uint64_t cursor, size_t max) = 0;
  virtual std::uint64_t head_seq() = 0;
};

// Content-policy hook (spam/illegal-content cleaning). Returning false
// drops the event. Default passes everything through; the relay itself
// never interprets record semantics.
using PolicyHook = std::function<bool(const std::string& did, const std::string& path,
                                      const codec::Value& record)>;

struct RelayConfig {
  size_t firehose_retention = 10'000;
  std::string log_path;  // append-only event log for restart recovery
};

struct IngestResult {
  bool emitted = false;
  std::uint64_t seq = 0;
  // bad-signature | bad-blocks | stale-prev | policy | duplicate
  std::string drop_reason;
};

class Relay {
 public:
  Relay(RelayConfig config, Clock& clock, identity::Network& net,
        identity::DirectoryClient& directory);

  Outcome<Unit> register_pds(std::shared_ptr<PdsClient> client);

  IngestResult ingest(const events::RepoEvent& event, const std::string& source_url);

  Outcome<std::vector<FirehoseEvent>> recrawl(const std::string& did);

  Outcome<events::Subscription<FirehoseEvent>> firehose_subscribe(std::uint64_t cursor) const;
  const events::EventLog<FirehoseEvent>& firehose() const { return firehose_; }

  Outcome<Bytes> replica_archive(const std::string& did) const;
  std::map<std::string, codec::Cid> replica_heads() const { return replica_heads_; }

  // Pulls from every registered source, ingests, and drains scheduled
  // re-crawls. Returns whether anything happened.
  bool pump();

  void set_policy(PolicyHook hook) { policy_ = std::move(hook); }
  const std::map<std::string, std::uint64_t>& metrics() const { return metrics_; }

 private:
  std::optional<Bytes> signing_key_for(const std::string& did, bool force_refresh);
  bool initial_crawl(const std::string& url);
  Outcome<std::vector<FirehoseEvent>> recrawl_with(const std::string& did,
                                                   PdsClient& client);
  std::uint64_t emit(events::RepoEvent origin);
  void bump(const std::string& metric) { ++metrics_[metric]; }
  void persist(const FirehoseEvent& event);
  void recover_from_log();

  RelayConfig cfg_;
  Clock* clock_;
  identity::Network* net_;
  identity::DirectoryClient* directory_;

  struct Source {
    std::shared_ptr<PdsClient> client;
    std::uint64_t cursor = 0;
    bool crawled = false;  // initial crawl completed
    std::uint64_t retry_attempts = 0;
  };
  std::map<std::string, Source> sources_;               // by url
  std::map<std::string, std::string> did_source_;       // did -> url
  std::map<std::string, codec::Cid> replica_heads_;     // did -> head commit
  std::map<std::string, Bytes> key_cache_;              // did -> signing key
  std::set<std::string> recrawl_queue_;

  repo::MemoryBlockStore store_;
  events::EventLog<FirehoseEvent> firehose_;
  PolicyHook policy_;
  std::map<std::string, std::uint64_t> metrics_;
};

}  // namespace atproto::relay
