#include "atproto/pds.hpp"

#include <sodium.h>

#include <algorithm>

#include "atproto/base32.hpp"

namespace atproto::pds {

using codec::Cid;
using codec::Value;
using events::RepoEvent;
using identity::PlcOperation;

identity::PlcOperation make_signed_operation(std::optional<Cid> prev,
                                             const std::string& handle,
                                             const std::string& pds_url,
                                             const std::string& signing_key,
                                             const std::vector<std::string>& rotation_keys,
                                             BytesView rotation_secret) {
  PlcOperation op;
  op.prev = prev;
  op.handle = handle;
  op.pds_url = pds_url;
  op.signing_key = signing_key;
  op.rotation_keys = rotation_keys;
  crypto::KeyPair key;
  key.secret_key.assign(rotation_secret.begin(), rotation_secret.end());
  op.sig = crypto::sign(op.encode(false), key);
  return op;
}

Pds::Pds(PdsConfig config, Clock& clock, plc::PlcDirectory& directory, net::FakeNet& net,
         Entropy entropy)
    : cfg_(std::move(config)),
      clock_(&clock),
      directory_(&directory),
      net_(&net),
      entropy_(std::move(entropy)),
      hasher_(crypto::make_password_hasher(cfg_.password_profile)),
      events_(cfg_.event_retention) {}

crypto::KeyPair Pds::make_key() {
  return crypto::keypair_from_seed(entropy_(32));
}

std::string Pds::next_tid() {
  std::int64_t micros = clock_->now_micros();
  if (micros <= tid_last_micros_) {
    ++tid_seq_;
    if (tid_seq_ >= 1024) {
      ++tid_last_micros_;
      tid_seq_ = 0;
    }
    micros = tid_last_micros_;
  } else {
    tid_last_micros_ = micros;
    tid_seq_ = 0;
  }
  std::uint64_t v = (static_cast<std::uint64_t>(micros) << 10) | tid_seq_;
  return base32::encode_sortable_u64(v);
}

void Pds::publish_handle_if_ours(const std::string& handle, const std::string& did) {
  if (cfg_.handle_domain.empty()) return;
  if (handle == cfg_.handle_domain || handle.ends_with("." + cfg_.handle_domain)) {
    net_->publish_handle(handle, did);
  }
}

void Pds::emit_event(RepoEvent event) {
  events_.append(std::move(event));
}

Outcome<std::string> Pds::create_account(const std::string& handle,
                                         const std::string& password) {
  if (by_handle_.count(handle)) {
    return Outcome<std::string>::failure("handle-taken", handle);
  }
  Account account;
  account.handle = handle;
  account.password_hash = hasher_.hash(password);
  account.rotation_key = make_key();
  account.signing_key = make_key();

  PlcOperation genesis;
  genesis.handle = handle;
  genesis.pds_url = cfg_.url;
  genesis.signing_key = crypto::encode_public_key(account.signing_key.public_key);
  genesis.rotation_keys = {crypto::encode_public_key(account.rotation_key.public_key)};
  genesis.sig = crypto::sign(genesis.encode(false), account.rotation_key);

  std::string did = identity::plc_derive_did(genesis);
  auto submitted = directory_->submit_operation(did, genesis);
  if (!submitted.accepted) {
    return Outcome<std::string>::failure("directory-rejected", submitted.reason);
  }
  account.did = did;

  repo::Signer signer = [&account](BytesView msg) {
    return crypto::sign(msg, account.signing_key);
  };
  repo::Repository repository = repo::Repository::create(store_, did, signer);

  RepoEvent event;
  event.kind = RepoEvent::Kind::Commit;
  event.did = did;
  event.commit = repository.head();
  event.prev = std::nullopt;
  auto commit_block = store_.get(repository.head());
  event.blocks[repository.head()] = *commit_block;
  auto root_block = store_.get(repository.mst_root());
  event.blocks[repository.mst_root()] = *root_block;

  repos_.emplace(did, std::move(repository));
  by_handle_[handle] = did;
  accounts_[did] = std::move(account);
  publish_handle_if_ours(handle, did);
  emit_event(std::move(event));
  return Outcome<std::string>::success(std::move(did));
}

Outcome<SessionToken> Pds::create_session(const std::string& identifier,
                                          const std::string& password) {
  std::string did = identifier;
  if (auto it = by_handle_.find(identifier); it != by_handle_.end()) did = it->second;
  auto it = accounts_.find(did);
  if (it == accounts_.end() || it->second.status != Account::Status::Active) {
    return Outcome<SessionToken>::failure("bad-credentials");
  }
  if (!hasher_.check(password, it->second.password_hash)) {
    return Outcome<SessionToken>::failure("bad-credentials");
  }
  std::string token = hex(entropy_(16));
  sessions_[token] = Session{did, clock_->now_micros() + cfg_.session_ttl_micros};
  return Outcome<SessionToken>::success(SessionToken{token, did});
}

Outcome<std::string> Pds::authorize(const std::string& token) const {
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return Outcome<std::string>::failure("unauthorized");
  if (clock_->now_micros() >= it->second.expires_at) {
    return Outcome<std::string>::failure("unauthorized", "session expired");
  }
  auto account = accounts_.find(it->second.did);
  if (account == accounts_.end() || account->second.status != Account::Status::Active) {
    return Outcome<std::string>::failure("unauthorized", "account inactive");
  }
  return Outcome<std::string>::success(it->second.did);
}

std::optional<std::string> Pds::session_did(const std::string& token) const {
  auto auth = authorize(token);
  if (!auth.ok()) return std::nullopt;
  return auth.value();
}

Outcome<WriteResult> Pds::write_records(const std::string& token,
                                        const std::vector<WriteRequest>& writes) {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<WriteResult>::failure(auth.error(), auth.detail());
  const std::string& did = auth.value();
  Account& account = accounts_.at(did);
  auto repo_it = repos_.find(did);
  if (repo_it == repos_.end()) {
    return Outcome<WriteResult>::failure("unknown-did", did);
  }

  std::vector<repo::RepoWrite> repo_writes;
  for (const WriteRequest& w : writes) {
    if (w.action == WriteRequest::Action::Delete) {
      if (!w.rkey) return Outcome<WriteResult>::failure("path-not-found", "delete needs rkey");
      repo_writes.push_back(repo::RepoWrite::del({w.collection, *w.rkey}));
      continue;
    }
    if (!w.record) {
      return Outcome<WriteResult>::failure("lexicon-violation", "write carries no record");
    }
    Value record = *w.record;
    if (record.is_map() && !record.at("$type")) {
      record.as_map().emplace("$type", Value(w.collection));
    }
    auto validation = lexicon::validate_record(w.collection, record);
    if (!validation.ok && !validation.violations.empty()) {
      return Outcome<WriteResult>::failure("lexicon-violation",
                                           validation.violations.front().code);
    }
    std::string rkey = w.rkey ? *w.rkey : next_tid();
    repo_writes.push_back(repo::RepoWrite::put({w.collection, rkey}, std::move(record)));
  }

  repo::Signer signer = [&account](BytesView msg) {
    return crypto::sign(msg, account.signing_key);
  };
  repo::ApplyResult applied;
  try {
    applied = repo_it->second.apply_writes(repo_writes, signer);
  } catch (const repo::RepoError& e) {
    if (e.kind() == repo::RepoErrorKind::PathNotFound) {
      return Outcome<WriteResult>::failure("path-not-found", e.what());
    }
    if (e.kind() == repo::RepoErrorKind::InvalidKey) {
      return Outcome<WriteResult>::failure("invalid-key", e.what());
    }
    return Outcome<WriteResult>::failure("storage-failure", e.what());
  }

  RepoEvent event;
  event.kind = RepoEvent::Kind::Commit;
  event.did = did;
  event.commit = applied.commit_cid;
  event.prev = applied.commit.prev;
  event.ops = applied.ops;
  event.blocks = applied.blocks;
  emit_event(std::move(event));

  WriteResult result;
  result.commit = applied.commit_cid;
  result.seq = events_.head_seq();
  for (const auto& op : applied.ops) result.paths.push_back(op.path);
  return Outcome<WriteResult>::success(std::move(result));
}

Outcome<events::Subscription<RepoEvent>> Pds::subscribe_repos(std::uint64_t cursor) const {
  if (cursor > events_.head_seq()) {
    return Outcome<events::Subscription<RepoEvent>>::failure("future-cursor");
  }
  std::uint64_t oldest = events_.oldest_seq();
  if (oldest > 0 && cursor + 1 < oldest) {
    return Outcome<events::Subscription<RepoEvent>>::failure("too-old");
  }
  return Outcome<events::Subscription<RepoEvent>>::success(
      events::Subscription<RepoEvent>(&events_, cursor));
}

Outcome<Bytes> Pds::sync_get_repo(const std::string& did) const {
  auto it = accounts_.find(did);
  if (it == accounts_.end() || it->second.status == Account::Status::Deactivated ||
      it->second.status == Account::Status::MigratedAway) {
    return Outcome<Bytes>::failure("unknown-did", did);
  }
  auto repo_it = repos_.find(did);
  if (repo_it == repos_.end()) return Outcome<Bytes>::failure("unknown-did", did);
  return Outcome<Bytes>::success(repo_it->second.export_archive());
}

std::vector<std::pair<std::string, Cid>> Pds::sync_list_repos() const {
  std::vector<std::pair<std::string, Cid>> out;
  for (const auto& [did, repository] : repos_) {
    auto account = accounts_.find(did);
    if (account == accounts_.end() || account->second.status != Account::Status::Active) {
      continue;
    }
    out.emplace_back(did, repository.head());
  }
  return out;
}

Outcome<Cid> Pds::put_blob(const std::string& token, Bytes data) {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<Cid>::failure(auth.error(), auth.detail());
  if (data.size() > cfg_.blob_cap) {
    return Outcome<Cid>::failure("too-large", std::to_string(data.size()));
  }
  Cid cid = Cid::of(data);
  blobs_[auth.value()][cid] = std::move(data);
  return Outcome<Cid>::success(cid);
}

Outcome<Bytes> Pds::get_blob(const std::string& did, const Cid& cid) const {
  auto it = blobs_.find(did);
  if (it == blobs_.end()) return Outcome<Bytes>::failure("not-found");
  auto blob = it->second.find(cid);
  if (blob == it->second.end()) return Outcome<Bytes>::failure("not-found");
  return Outcome<Bytes>::success(blob->second);
}

Outcome<std::string> Pds::prepare_migration(const std::string& did, const std::string& handle,
                                            const std::string& password) {
  auto it = accounts_.find(did);
  if (it != accounts_.end() && it->second.status == Account::Status::Active) {
    return Outcome<std::string>::failure("import-failed", "account already active here");
  }
  PendingMigration pending;
  pending.handle = handle;
  pending.password_hash = hasher_.hash(password);
  pending.signing_key = make_key();
  std::string encoded = crypto::encode_public_key(pending.signing_key.public_key);
  pending_migrations_[did] = std::move(pending);
  return Outcome<std::string>::success(std::move(encoded));
}

Outcome<Unit> Pds::migrate_in(const std::string& did, BytesView archive,
                              const std::vector<Bytes>& blobs,
                              const PlcOperation& plc_update,
                              const std::string& rotation_secret) {
  auto pending_it = pending_migrations_.find(did);
  if (pending_it == pending_migrations_.end()) {
    return Outcome<Unit>::failure("import-failed", "no prepared migration for did");
  }
  PendingMigration& pending = pending_it->second;

  if (plc_update.pds_url != cfg_.url) {
    return Outcome<Unit>::failure("directory-rejected", "update does not point here");
  }
  if (plc_update.signing_key != crypto::encode_public_key(pending.signing_key.public_key)) {
    return Outcome<Unit>::failure("directory-rejected", "update names a foreign signing key");
  }

  repo::ImportResult imported;
  try {
    imported = repo::import_archive(archive, store_);
  } catch (const repo::RepoError& e) {
    return Outcome<Unit>::failure("import-failed", e.what());
  }
  if (imported.commit.did != did) {
    return Outcome<Unit>::failure("import-failed", "archive belongs to another did");
  }

  auto submitted = directory_->submit_operation(did, plc_update);
  if (!submitted.accepted) {
    return Outcome<Unit>::failure("directory-rejected", submitted.reason);
  }

  Account account;
  account.did = did;
  account.handle = plc_update.handle;
  account.password_hash = pending.password_hash;
  account.signing_key = pending.signing_key;
  if (!rotation_secret.empty()) {
    auto secret = crypto::decode_secret_key(rotation_secret);
    if (secret) {
      account.rotation_key.secret_key = *secret;
      account.rotation_key.public_key.resize(crypto_sign_PUBLICKEYBYTES);
      crypto_sign_ed25519_sk_to_pk(account.rotation_key.public_key.data(),
                                   account.rotation_key.secret_key.data());
    }
  }

  repos_.insert_or_assign(did, repo::Repository::open(store_, imported.root));
  by_handle_[account.handle] = did;
  publish_handle_if_ours(account.handle, did);
  for (const Bytes& blob : blobs) {
    blobs_[did][Cid::of(blob)] = blob;
  }

  RepoEvent event;
  event.kind = RepoEvent::Kind::Anchor;
  event.did = did;
  event.commit = imported.root;
  event.prev = imported.commit.prev;
  auto commit_block = store_.get(imported.root);
  event.blocks[imported.root] = *commit_block;

  accounts_[did] = std::move(account);
  pending_migrations_.erase(pending_it);
  emit_event(std::move(event));
  return ok_unit();
}

Outcome<AccountExport> Pds::export_account(const std::string& token) const {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<AccountExport>::failure(auth.error(), auth.detail());
  const std::string& did = auth.value();
  const Account& account = accounts_.at(did);
  auto repo_it = repos_.find(did);
  if (repo_it == repos_.end()) return Outcome<AccountExport>::failure("unknown-did");

  AccountExport out;
  out.did = did;
  out.handle = account.handle;
  out.archive = repo_it->second.export_archive();
  if (auto it = blobs_.find(did); it != blobs_.end()) {
    for (const auto& [cid, blob] : it->second) out.blobs.push_back(blob);
  }
  out.rotation_secret = crypto::encode_secret_key(account.rotation_key.secret_key);
  return Outcome<AccountExport>::success(std::move(out));
}

Outcome<Unit> Pds::deactivate_account(const std::string& did) {
  auto it = accounts_.find(did);
  if (it == accounts_.end()) return Outcome<Unit>::failure("unknown-did", did);
  it->second.status = Account::Status::MigratedAway;
  return ok_unit();
}

Outcome<Unit> Pds::set_mute(const std::string& token, const std::string& subject, bool on) {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<Unit>::failure(auth.error(), auth.detail());
  Prefs& prefs = prefs_[auth.value()];
  auto& set = subject.starts_with("at://") ? prefs.muted_threads : prefs.muted_actors;
  if (on) {
    set.insert(subject);
  } else {
    set.erase(subject);
  }
  return ok_unit();
}

Outcome<Unit> Pds::set_label_pref(const std::string& token, const std::string& value,
                                  const std::string& pref) {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<Unit>::failure(auth.error(), auth.detail());
  if (pref != "show" && pref != "warn" && pref != "hide") {
    return Outcome<Unit>::failure("bad-pref", pref);
  }
  prefs_[auth.value()].label_prefs[value] = pref;
  return ok_unit();
}

Outcome<Unit> Pds::set_labeler_subscription(const std::string& token,
                                            const std::string& labeler, bool on) {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<Unit>::failure(auth.error(), auth.detail());
  Prefs& prefs = prefs_[auth.value()];
  if (on) {
    prefs.labeler_dids.insert(labeler);
  } else {
    prefs.labeler_dids.erase(labeler);
  }
  return ok_unit();
}

Outcome<ViewerContext> Pds::viewer_context(const std::string& token) const {
  auto auth = authorize(token);
  if (!auth.ok()) return Outcome<ViewerContext>::failure(auth.error(), auth.detail());
  return Outcome<ViewerContext>::success(viewer_context_for_did(auth.value()));
}

ViewerContext Pds::viewer_context_for_did(const std::string& did) const {
  ViewerContext ctx;
  ctx.did = did;
  auto it = prefs_.find(did);
  if (it != prefs_.end()) {
    ctx.muted_actors = it->second.muted_actors;
    ctx.muted_threads = it->second.muted_threads;
    ctx.label_prefs = it->second.label_prefs;
    ctx.labeler_dids = it->second.labeler_dids;
  }
  return ctx;
}

std::optional<Account> Pds::account_for_handle(const std::string& handle) const {
  auto it = by_handle_.find(handle);
  if (it == by_handle_.end()) return std::nullopt;
  return account(it->second);
}

std::optional<Account> Pds::account(const std::string& did) const {
  auto it = accounts_.find(did);
  if (it == accounts_.end()) return std::nullopt;
  return it->second;
}

const repo::Repository* Pds::repository(const std::string& did) const {
  auto it = repos_.find(did);
  return it == repos_.end() ? nullptr : &it->second;
}

}  // namespace atproto::pds
