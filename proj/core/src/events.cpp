#include "atproto/events.hpp"

#include "atproto/varint.hpp"

namespace atproto::events {

using codec::Cid;
using codec::CidLink;
using codec::Value;

namespace {

std::string kind_str(RepoEvent::Kind kind) {
  switch (kind) {
    case RepoEvent::Kind::Commit: return "commit";
    case RepoEvent::Kind::Diff: return "diff";
    case RepoEvent::Kind::Anchor: return "anchor";
  }
  return "commit";
}

std::optional<RepoEvent::Kind> kind_from(const std::string& s) {
  if (s == "commit") return RepoEvent::Kind::Commit;
  if (s == "diff") return RepoEvent::Kind::Diff;
  if (s == "anchor") return RepoEvent::Kind::Anchor;
  return std::nullopt;
}

std::string action_str(repo::RecordOp::Action a) {
  switch (a) {
    case repo::RecordOp::Action::Create: return "create";
    case repo::RecordOp::Action::Update: return "update";
    case repo::RecordOp::Action::Delete: return "delete";
  }
  return "create";
}

std::optional<repo::RecordOp::Action> action_from(const std::string& s) {
  if (s == "create") return repo::RecordOp::Action::Create;
  if (s == "update") return repo::RecordOp::Action::Update;
  if (s == "delete") return repo::RecordOp::Action::Delete;
  return std::nullopt;
}

}  // namespace

Bytes encode_event(const RepoEvent& event) {
  Value::Map m;
  m.emplace("kind", Value(kind_str(event.kind)));
  m.emplace("seq", Value(static_cast<std::int64_t>(event.seq)));
  m.emplace("did", Value(event.did));
  m.emplace("commit", Value(CidLink{event.commit}));
  m.emplace("prev", event.prev ? Value(CidLink{*event.prev}) : Value(nullptr));
  Value::Array ops;
  for (const repo::RecordOp& op : event.ops) {
    Value::Map om;
    om.emplace("action", Value(action_str(op.action)));
    om.emplace("path", Value(op.path));
    om.emplace("cid", op.record ? Value(CidLink{*op.record}) : Value(nullptr));
    ops.push_back(Value(std::move(om)));
  }
  m.emplace("ops", Value(std::move(ops)));
  // block CIDs are recomputable from the bytes, so only the bytes travel
  Value::Array blocks;
  for (const auto& [cid, block] : event.blocks) blocks.push_back(Value(block));
  m.emplace("blocks", Value(std::move(blocks)));
  return codec::encode(Value(std::move(m)));
}

std::optional<RepoEvent> decode_event(BytesView data) {
  Value v;
  try {
    v = codec::decode(data);
  } catch (const codec::CborError&) {
    return std::nullopt;
  }
  if (!v.is_map()) return std::nullopt;
  const Value* kind = v.at("kind");
  const Value* seq = v.at("seq");
  const Value* did = v.at("did");
  const Value* commit = v.at("commit");
  const Value* prev = v.at("prev");
  const Value* ops = v.at("ops");
  const Value* blocks = v.at("blocks");
  if (!kind || !kind->is_string() || !seq || !seq->is_int() || !did || !did->is_string() ||
      !commit || !commit->is_link() || !prev || !ops || !ops->is_array() || !blocks ||
      !blocks->is_array()) {
    return std::nullopt;
  }
  RepoEvent event;
  auto k = kind_from(kind->as_string());
  if (!k || seq->as_int() < 0) return std::nullopt;
  event.kind = *k;
  event.seq = static_cast<std::uint64_t>(seq->as_int());
  event.did = did->as_string();
  event.commit = commit->as_link();
  if (prev->is_link()) {
    event.prev = prev->as_link();
  } else if (!prev->is_null()) {
    return std::nullopt;
  }
  for (const Value& ov : ops->as_array()) {
    const Value* action = ov.at("action");
    const Value* path = ov.at("path");
    const Value* cid = ov.at("cid");
    if (!action || !action->is_string() || !path || !path->is_string() || !cid) {
      return std::nullopt;
    }
    auto a = action_from(action->as_string());
    if (!a) return std::nullopt;
    repo::RecordOp op;
    op.action = *a;
    op.path = path->as_string();
    if (cid->is_link()) {
      op.record = cid->as_link();
    } else if (!cid->is_null()) {
      return std::nullopt;
    }
    event.ops.push_back(std::move(op));
  }
  for (const Value& bv : blocks->as_array()) {
    if (!bv.is_bytes()) return std::nullopt;
    event.blocks.emplace(Cid::of(bv.as_bytes()), bv.as_bytes());
  }
  return event;
}

void frame_event(Bytes& out, const RepoEvent& event) {
  Bytes payload = encode_event(event);
  put_uvarint(out, payload.size());
  append(out, payload);
}

std::optional<RepoEvent> read_framed_event(BytesView data, size_t& pos) {
  auto len = get_uvarint(data, pos);
  if (!len || pos + *len > data.size()) return std::nullopt;
  auto event = decode_event(data.subspan(pos, *len));
  pos += *len;
  return event;
}

bool verify_event(const RepoEvent& event, BytesView signing_key, std::string* fail_reason) {
  auto fail = [&](const char* why) {
    if (fail_reason) *fail_reason = why;
    return false;
  };
  auto commit_block = event.blocks.find(event.commit);
  if (commit_block == event.blocks.end()) return fail("commit block absent");
  auto commit = repo::parse_commit(commit_block->second);
  if (!commit) return fail("commit block malformed");
  if (commit->did != event.did) return fail("did mismatch");
  if (commit->prev != event.prev) return fail("prev mismatch");
  if (!repo::verify_commit(*commit, signing_key)) return fail("bad commit signature");

  repo::MemoryBlockStore staging;
  for (const auto& [cid, block] : event.blocks) {
    (void)cid;
    staging.put(block);
  }
  for (const repo::RecordOp& op : event.ops) {
    repo::Proof proof;
    try {
      proof = repo::build_proof(staging, commit->data, op.path);
    } catch (const repo::RepoError&) {
      return fail("proof blocks missing");
    }
    if (op.action == repo::RecordOp::Action::Delete) {
      if (proof.kind != repo::Proof::Kind::Exclusion ||
          !repo::verify_proof(commit->data, proof)) {
        return fail("delete op not proven");
      }
      continue;
    }
    if (!op.record) return fail("write op missing record cid");
    auto proven = repo::verify_inclusion(commit->data, proof);
    if (!proven || *proven != *op.record) return fail("write op not proven");
    if (!staging.has(*op.record)) return fail("record block absent");
  }
  return true;
}

}  // namespace atproto::events
