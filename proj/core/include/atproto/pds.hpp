#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "atproto/clock.hpp"
#include "atproto/crypto.hpp"
#include "atproto/events.hpp"
#include "atproto/fakenet.hpp"
#include "atproto/identity.hpp"
#include "atproto/lexicon.hpp"
#include "atproto/outcome.hpp"
#include "atproto/plc_directory.hpp"
#include "atproto/repo.hpp"
#include "atproto/viewer.hpp"

namespace atproto::pds {

// Randomness capability; the simulator injects a seeded source.
using Entropy = std::function<Bytes(size_t)>;

struct PdsConfig {
  std::string url;            // e.g. "https://pds1.test"
  std::string handle_domain;  // handles issued under this zone, e.g. "pds1.test"
  size_t event_retention = 10'000;
  size_t blob_cap = 1 << 20;
  std::int64_t session_ttl_micros = 24ll * 3600 * 1'000'000;
  std::string password_profile = "fast";
};

struct Account {
  std::string did;
  std::string handle;
  std::string password_hash;
  crypto::KeyPair signing_key;   // custodial repo-commit key
  crypto::KeyPair rotation_key;  // custodial document-control key
  enum class Status { Active, Deactivated, MigratedAway };
  Status status = Status::Active;
};

struct SessionToken {
  std::string token;
  std::string did;
};

struct WriteRequest {
  enum class Action { Create, Update, Delete };
  Action action = Action::Create;
  std::string collection;
  std::optional<std::string> rkey;  // assigned (timestamp-sortable) when absent
  std::optional<codec::Value> record;
};

struct WriteResult {
  codec::Cid commit;
  std::uint64_t seq = 0;
  std::vector<std::string> paths;
};

struct AccountExport {
  std::string did;
  std::string handle;
  Bytes archive;
  std::vector<Bytes> blobs;
  std::string rotation_secret;  // encoded secret key, user-held
};

// Personal Data Server: account registry with custodial keys, authenticated
// writes, blob storage, public sync, the per-PDS update stream, and account
// migration.
class Pds {
 public:
  Pds(PdsConfig config, Clock& clock, plc::PlcDirectory& directory, net::FakeNet& net,
      Entropy entropy);

  const PdsConfig& config() const { return cfg_; }

  Outcome<std::string> create_account(const std::string& handle, const std::string& password);
  Outcome<SessionToken> create_session(const std::string& identifier,
                                       const std::string& password);

  Outcome<WriteResult> write_records(const std::string& token,
                                     const std::vector<WriteRequest>& writes);

  Outcome<events::Subscription<events::RepoEvent>> subscribe_repos(std::uint64_t cursor) const;
  const events::EventLog<events::RepoEvent>& event_log() const { return events_; }

  Outcome<Bytes> sync_get_repo(const std::string& did) const;
  std::vector<std::pair<std::string, codec::Cid>> sync_list_repos() const;

  Outcome<codec::Cid> put_blob(const std::string& token, Bytes data);
  Outcome<Bytes> get_blob(const std::string& did, const codec::Cid& cid) const;

  // Migration target side: generates the new custodial signing key first so
  // the caller can bake it into the directory update.
  Outcome<std::string> prepare_migration(const std::string& did, const std::string& handle,
                                         const std::string& password);
  Outcome<Unit> migrate_in(const std::string& did, BytesView archive,
                           const std::vector<Bytes>& blobs,
                           const identity::PlcOperation& plc_update,
                           const std::string& rotation_secret = "");

  // Migration source side: the user-held backup kit.
  Outcome<AccountExport> export_account(const std::string& token) const;
  Outcome<Unit> deactivate_account(const std::string& did);

  // Private per-account state, surfaced only as a viewer context.
  Outcome<Unit> set_mute(const std::string& token, const std::string& subject, bool on);
  Outcome<Unit> set_label_pref(const std::string& token, const std::string& value,
                               const std::string& pref);
  Outcome<Unit> set_labeler_subscription(const std::string& token, const std::string& labeler,
                                         bool on);
  Outcome<ViewerContext> viewer_context(const std::string& token) const;
  ViewerContext viewer_context_for_did(const std::string& did) const;

  std::optional<Account> account_for_handle(const std::string& handle) const;
  std::optional<Account> account(const std::string& did) const;
  const repo::Repository* repository(const std::string& did) const;
  std::optional<std::string> session_did(const std::string& token) const;

 private:
  Outcome<std::string> authorize(const std::string& token) const;
  std::string next_tid();
  crypto::KeyPair make_key();
  void publish_handle_if_ours(const std::string& handle, const std::string& did);
  void emit_event(events::RepoEvent event);

  PdsConfig cfg_;
  Clock* clock_;
  plc::PlcDirectory* directory_;
  net::FakeNet* net_;
  Entropy entropy_;
  crypto::PasswordHasher hasher_;

  repo::MemoryBlockStore store_;
  std::map<std::string, Account> accounts_;        // by did
  std::map<std::string, std::string> by_handle_;   // handle -> did
  std::map<std::string, repo::Repository> repos_;  // by did

  struct Session {
    std::string did;
    std::int64_t expires_at = 0;
  };
  std::map<std::string, Session> sessions_;

  struct Prefs {
    std::set<std::string> muted_actors;
    std::set<std::string> muted_threads;
    std::map<std::string, std::string> label_prefs;
    std::set<std::string> labeler_dids;
  };
  std::map<std::string, Prefs> prefs_;

  std::map<std::string, std::map<codec::Cid, Bytes>> blobs_;  // by did

  struct PendingMigration {
    std::string handle;
    std::string password_hash;
    crypto::KeyPair signing_key;
  };
  std::map<std::string, PendingMigration> pending_migrations_;

  events::EventLog<events::RepoEvent> events_;
  std::int64_t tid_last_micros_ = 0;
  std::uint32_t tid_seq_ = 0;
};

// Builds and signs a directory operation with a rotation secret key.
identity::PlcOperation make_signed_operation(std::optional<codec::Cid> prev,
                                             const std::string& handle,
                                             const std::string& pds_url,
                                             const std::string& signing_key,
                                             const std::vector<std::string>& rotation_keys,
                                             BytesView rotation_secret);

}  // namespace atproto::pds
