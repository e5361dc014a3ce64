#include "atproto/relay.hpp"

#include <fstream>

#include "atproto/crypto.hpp"
#include "atproto/varint.hpp"

namespace atproto::relay {

using codec::Cid;
using events::RepoEvent;

Bytes encode_firehose_event(const FirehoseEvent& event) {
  RepoEvent wire = event.origin;
  wire.seq = event.seq;  // subscribers cursor on the global sequence
  return events::encode_event(wire);
}

std::optional<FirehoseEvent> decode_firehose_event(BytesView data) {
  auto wire = events::decode_event(data);
  if (!wire) return std::nullopt;
  FirehoseEvent out;
  out.seq = wire->seq;
  out.origin = std::move(*wire);
  return out;
}

Relay::Relay(RelayConfig config, Clock& clock, identity::Network& net,
             identity::DirectoryClient& directory)
    : cfg_(std::move(config)),
      clock_(&clock),
      net_(&net),
      directory_(&directory),
      firehose_(cfg_.firehose_retention) {
  if (!cfg_.log_path.empty()) recover_from_log();
}

std::optional<Bytes> Relay::signing_key_for(const std::string& did, bool force_refresh) {
  if (!force_refresh) {
    auto it = key_cache_.find(did);
    if (it != key_cache_.end()) return it->second;
  }
  auto parsed = identity::Did::parse(did);
  if (!parsed) return std::nullopt;
  identity::ResolverEnv env{*net_, *directory_, *clock_};
  auto resolved = identity::resolve_did(*parsed, env);
  if (!resolved.ok()) return std::nullopt;
  auto key = crypto::decode_public_key(resolved.document->signing_key);
  if (!key) return std::nullopt;
  key_cache_[did] = *key;
  return key;
}

std::uint64_t Relay::emit(RepoEvent origin) {
  FirehoseEvent event;
  event.origin = std::move(origin);
  event.verified = true;
  std::uint64_t seq = firehose_.append(std::move(event));
  bump("emitted");
  return seq;
}

void Relay::persist(const FirehoseEvent& event) {
  if (cfg_.log_path.empty()) return;
  std::ofstream out(cfg_.log_path, std::ios::app | std::ios::binary);
  Bytes payload = encode_firehose_event(event);
  Bytes frame;
  put_uvarint(frame, payload.size());
  append(frame, payload);
  out.write(reinterpret_cast<const char*>(frame.data()),
            static_cast<std::streamsize>(frame.size()));
}

void Relay::recover_from_log() {
  std::ifstream in(cfg_.log_path, std::ios::binary);
  if (!in) return;
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t pos = 0;
  std::vector<FirehoseEvent> events;
  while (pos < data.size()) {
    size_t frame_pos = pos;
    auto len = get_uvarint(data, frame_pos);
    if (!len || frame_pos + *len > data.size()) break;
    auto event = decode_firehose_event(BytesView(data).subspan(frame_pos, *len));
    pos = frame_pos + *len;
    if (!event) continue;
    for (const auto& [cid, block] : event->origin.blocks) {
      (void)cid;
      store_.put(block);
    }
    replica_heads_[event->origin.did] = event->origin.commit;
    events.push_back(std::move(*event));
  }
  if (!events.empty()) {
    std::uint64_t next = events.back().seq + 1;
    firehose_.restore(std::move(events), next);
  }
}

Outcome<Unit> Relay::register_pds(std::shared_ptr<PdsClient> client) {
  std::string url = client->url();
  auto it = sources_.find(url);
  if (it != sources_.end() && it->second.crawled) return ok_unit();  // idempotent
  Source& source = sources_[url];
  source.client = client;
  if (!client->reachable()) {
    ++source.retry_attempts;
    bump("register.retries");
    return Outcome<Unit>::failure("unreachable", url);
  }
  if (!initial_crawl(url)) {
    ++source.retry_attempts;
    bump("register.retries");
    return Outcome<Unit>::failure("unreachable", url);
  }
  return ok_unit();
}

bool Relay::initial_crawl(const std::string& url) {
  Source& source = sources_[url];
  auto repos = source.client->list_repos();
  if (!repos) return false;
  source.cursor = source.client->head_seq();
  for (const auto& [did, head] : *repos) {
    did_source_[did] = url;
    auto replica = replica_heads_.find(did);
    if (replica != replica_heads_.end() && replica->second == head) continue;
    recrawl_with(did, *source.client);
  }
  source.crawled = true;
  return true;
}

IngestResult Relay::ingest(const RepoEvent& event, const std::string& source_url) {
  IngestResult result;
  auto dropped = [&](const char* reason) {
    result.drop_reason = reason;
    bump(std::string("dropped.") + reason);
    return result;
  };

  auto commit_it = event.blocks.find(event.commit);
  if (commit_it == event.blocks.end()) return dropped("bad-blocks");
  auto commit = repo::parse_commit(commit_it->second);
  if (!commit || commit->did != event.did) return dropped("bad-blocks");

  // signature first: a forged event must never advance any state
  auto key = signing_key_for(event.did, false);
  std::string why;
  bool verified = key && events::verify_event(event, *key, &why);
  if (!verified && (!key || why == "bad commit signature")) {
    // key may have rotated (e.g. after migration): re-resolve once
    key = signing_key_for(event.did, true);
    verified = key && events::verify_event(event, *key, &why);
  }
  if (!verified) {
    if (why.empty() || why == "bad commit signature") return dropped("bad-signature");
    return dropped("bad-blocks");
  }

  auto replica = replica_heads_.find(event.did);
  bool have_replica = replica != replica_heads_.end();
  if (have_replica && replica->second == event.commit) {
    if (event.kind == RepoEvent::Kind::Anchor) {
      // migration announcement: repoint the source and refresh identity
      did_source_[event.did] = source_url;
      signing_key_for(event.did, true);
      result.seq = emit(event);
      result.emitted = true;
      persist(FirehoseEvent{result.seq, event, true});
      return result;
    }
    return dropped("duplicate");
  }
  bool extends_head = have_replica ? (event.prev && *event.prev == replica->second)
                                   : !event.prev.has_value();
  if (!extends_head) {
    recrawl_queue_.insert(event.did);
    return dropped("stale-prev");
  }

  if (policy_) {
    for (const repo::RecordOp& op : event.ops) {
      if (op.action == repo::RecordOp::Action::Delete) continue;
      auto block = event.blocks.find(*op.record);
      if (block == event.blocks.end()) return dropped("bad-blocks");
      codec::Value record;
      try {
        record = codec::decode(block->second);
      } catch (const codec::CborError&) {
        return dropped("bad-blocks");
      }
      if (!policy_(event.did, op.path, record)) return dropped("policy");
    }
  }

  for (const auto& [cid, block] : event.blocks) {
    (void)cid;
    store_.put(block);
  }
  replica_heads_[event.did] = event.commit;
  did_source_[event.did] = source_url;
  result.seq = emit(event);
  result.emitted = true;
  persist(FirehoseEvent{result.seq, event, true});
  return result;
}

Outcome<std::vector<FirehoseEvent>> Relay::recrawl(const std::string& did) {
  auto source_it = did_source_.find(did);
  if (source_it == did_source_.end()) {
    return Outcome<std::vector<FirehoseEvent>>::failure("fetch-failed", "unknown did");
  }
  auto source = sources_.find(source_it->second);
  if (source == sources_.end() || !source->second.client->reachable()) {
    return Outcome<std::vector<FirehoseEvent>>::failure("fetch-failed", "source unreachable");
  }
  return recrawl_with(did, *source->second.client);
}

Outcome<std::vector<FirehoseEvent>> Relay::recrawl_with(const std::string& did,
                                                        PdsClient& client) {
  using Out = Outcome<std::vector<FirehoseEvent>>;
  auto archive = client.fetch_repo(did);
  if (!archive) return Out::failure("fetch-failed", did);

  repo::MemoryBlockStore staging;
  repo::ImportResult imported;
  try {
    imported = repo::import_archive(*archive, staging);
  } catch (const repo::RepoError& e) {
    bump("recrawl.verify-failed");
    return Out::failure("verify-failed", e.what());
  }
  if (imported.commit.did != did) {
    bump("recrawl.verify-failed");
    return Out::failure("verify-failed", "archive did mismatch");
  }
  auto key = signing_key_for(did, true);
  if (!key || !repo::verify_commit(imported.commit, *key)) {
    bump("recrawl.verify-failed");
    return Out::failure("verify-failed", "commit signature");
  }
  bump("recrawls");

  auto replica = replica_heads_.find(did);
  if (replica != replica_heads_.end() && replica->second == imported.root) {
    return Out::success({});  // replica already current
  }

  std::optional<Cid> old_root;
  if (replica != replica_heads_.end()) {
    auto old_commit_block = store_.get(replica->second);
    if (old_commit_block) {
      auto old_commit = repo::parse_commit(*old_commit_block);
      if (old_commit) old_root = old_commit->data;
    }
  }

  // merge verified blocks, then describe the delta as one synthetic event
  for (const auto& [cid, block] : staging.blocks()) {
    (void)cid;
    store_.put(block);
  }

  repo::RepoDiff delta = repo::diff(store_, old_root, imported.commit.data);
  replica_heads_[did] = imported.root;
  if (delta.empty()) return Out::success({});

  RepoEvent event;
  event.kind = RepoEvent::Kind::Diff;
  event.did = did;
  event.commit = imported.root;
  event.prev = imported.commit.prev;  // keeps the event statelessly verifiable
  event.blocks[imported.root] = *store_.get(imported.root);
  auto add_proof_blocks = [&](const std::string& path) {
    repo::Proof proof = repo::build_proof(store_, imported.commit.data, path);
    for (const Bytes& block : proof.blocks) event.blocks[Cid::of(block)] = block;
  };
  for (const repo::DiffEntry& e : delta.created) {
    event.ops.push_back({repo::RecordOp::Action::Create, e.key, e.new_cid});
    add_proof_blocks(e.key);
    event.blocks[*e.new_cid] = *store_.get(*e.new_cid);
  }
  for (const repo::DiffEntry& e : delta.updated) {
    event.ops.push_back({repo::RecordOp::Action::Update, e.key, e.new_cid});
    add_proof_blocks(e.key);
    event.blocks[*e.new_cid] = *store_.get(*e.new_cid);
  }
  for (const repo::DiffEntry& e : delta.deleted) {
    event.ops.push_back({repo::RecordOp::Action::Delete, e.key, std::nullopt});
    add_proof_blocks(e.key);
  }

  FirehoseEvent out;
  out.origin = event;
  out.seq = emit(std::move(event));
  out.verified = true;
  persist(out);
  return Out::success({out});
}

Outcome<events::Subscription<FirehoseEvent>> Relay::firehose_subscribe(
    std::uint64_t cursor) const {
  if (cursor > firehose_.head_seq()) {
    return Outcome<events::Subscription<FirehoseEvent>>::failure("future-cursor");
  }
  std::uint64_t oldest = firehose_.oldest_seq();
  if (oldest > 0 && cursor + 1 < oldest) {
    return Outcome<events::Subscription<FirehoseEvent>>::failure("too-old");
  }
  return Outcome<events::Subscription<FirehoseEvent>>::success(
      events::Subscription<FirehoseEvent>(&firehose_, cursor));
}

Outcome<Bytes> Relay::replica_archive(const std::string& did) const {
  auto it = replica_heads_.find(did);
  if (it == replica_heads_.end()) return Outcome<Bytes>::failure("unknown-did", did);
  return Outcome<Bytes>::success(repo::export_archive(store_, it->second));
}

bool Relay::pump() {
  bool progress = false;
  for (auto& [url, source] : sources_) {
    if (!source.client->reachable()) continue;
    if (!source.crawled) {
      if (initial_crawl(url)) progress = true;
      continue;
    }
    while (true) {
      auto pull = source.client->pull_events(source.cursor, 64);
      if (pull.status == PdsClient::Pull::Status::TooOld) {
        // fell off the retention window: fall back to a full re-crawl
        auto repos = source.client->list_repos();
        if (repos) {
          for (const auto& [did, head] : *repos) {
            did_source_[did] = url;
            (void)head;
            recrawl_queue_.insert(did);
          }
          source.cursor = source.client->head_seq();
          progress = true;
        }
        break;
      }
      if (pull.status != PdsClient::Pull::Status::Ok || pull.events.empty()) break;
      for (const RepoEvent& event : pull.events) {
        ingest(event, url);
        source.cursor = event.seq;
      }
      progress = true;
    }
  }
  auto queue = std::move(recrawl_queue_);
  recrawl_queue_.clear();
  for (const std::string& did : queue) {
    auto result = recrawl(did);
    if (result.ok() && !result.value().empty()) progress = true;
  }
  return progress;
}

}  // namespace atproto::relay
