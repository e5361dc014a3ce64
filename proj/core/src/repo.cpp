#include "atproto/repo.hpp"

#include <algorithm>
#include <set>

#include "atproto/crypto.hpp"
#include "atproto/varint.hpp"

namespace atproto::repo {

using codec::Cid;
using codec::CidLink;
using codec::Value;

bool RecordPath::valid_collection(std::string_view name) {
  if (name.empty() || name.size() > 256) return false;
  size_t segments = 1;
  bool seg_start = true;
  for (char c : name) {
    if (c == '.') {
      if (seg_start) return false;
      ++segments;
      seg_start = true;
      continue;
    }
    if (seg_start && !(c >= 'a' && c <= 'z')) return false;
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-')) return false;
    seg_start = false;
  }
  return !seg_start && segments >= 2;
}

bool RecordPath::valid_rkey(std::string_view rkey) {
  if (rkey.empty() || rkey.size() > 512) return false;
  for (char c : rkey) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
              (c >= '0' && c <= '9') || c == '.' || c == '_' || c == ':' ||
              c == '~' || c == '-';
    if (!ok) return false;
  }
  return true;
}

std::optional<RecordPath> RecordPath::parse(std::string_view key) {
  size_t slash = key.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  RecordPath p{std::string(key.substr(0, slash)), std::string(key.substr(slash + 1))};
  if (!valid_collection(p.collection) || !valid_rkey(p.rkey)) return std::nullopt;
  return p;
}

Bytes encode_commit(const Commit& commit, bool with_sig) {
  Value::Map m;
  m.emplace("did", Value(commit.did));
  m.emplace("version", Value(commit.version));
  m.emplace("prev", commit.prev ? Value(CidLink{*commit.prev}) : Value(nullptr));
  m.emplace("data", Value(CidLink{commit.data}));
  if (with_sig) m.emplace("sig", Value(commit.sig));
  return codec::encode(Value(std::move(m)));
}

std::optional<Commit> parse_commit(BytesView block) {
  Value v;
  try {
    v = codec::decode(block);
  } catch (const codec::CborError&) {
    return std::nullopt;
  }
  if (!v.is_map()) return std::nullopt;
  const Value* did = v.at("did");
  const Value* version = v.at("version");
  const Value* prev = v.at("prev");
  const Value* data = v.at("data");
  const Value* sig = v.at("sig");
  if (!did || !did->is_string() || !version || !version->is_int() || !prev ||
      !data || !data->is_link() || !sig || !sig->is_bytes() || v.as_map().size() != 5) {
    return std::nullopt;
  }
  Commit c;
  c.did = did->as_string();
  c.version = version->as_int();
  if (prev->is_link()) {
    c.prev = prev->as_link();
  } else if (!prev->is_null()) {
    return std::nullopt;
  }
  c.data = data->as_link();
  c.sig = sig->as_bytes();
  return c;
}

bool verify_commit(const Commit& commit, BytesView public_key) {
  return crypto::verify(encode_commit(commit, false), commit.sig, public_key);
}

namespace {

struct WalkedNode {
  Mst::ParsedNode node;
  Bytes block;
};

std::optional<WalkedNode> load_block(const BlockStore& store, const Cid& cid) {
  auto block = store.get(cid);
  if (!block) return std::nullopt;
  WalkedNode w;
  try {
    w.node = Mst::parse_node(*block);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  w.block = std::move(*block);
  return w;
}

size_t entry_position(const Mst::ParsedNode& n, const std::string& key) {
  size_t i = 0;
  while (i < n.entries.size() && n.entries[i].key < key) ++i;
  return i;
}

void enumerate_into(const BlockStore& store, const Cid& root,
                    std::map<std::string, Cid>& out) {
  auto w = load_block(store, root);
  if (!w) throw RepoError(RepoErrorKind::MissingBlock, "missing MST block " + root.str());
  for (size_t i = 0; i <= w->node.entries.size(); ++i) {
    if (w->node.children[i]) enumerate_into(store, *w->node.children[i], out);
    if (i < w->node.entries.size()) {
      out.emplace(w->node.entries[i].key, w->node.entries[i].value);
    }
  }
}

}  // namespace

Proof build_proof(const BlockStore& store, const Cid& mst_root, const std::string& key) {
  Proof proof;
  proof.key = key;
  int klayer = key_layer(key);
  Cid current = mst_root;
  while (true) {
    auto w = load_block(store, current);
    if (!w) throw RepoError(RepoErrorKind::MissingBlock, "missing MST block " + current.str());
    proof.blocks.push_back(w->block);
    const Mst::ParsedNode& n = w->node;
    if (klayer > n.layer) {
      proof.kind = Proof::Kind::Exclusion;  // key layer above the whole tree
      return proof;
    }
    size_t i = entry_position(n, key);
    if (n.layer == klayer) {
      if (i < n.entries.size() && n.entries[i].key == key) {
        proof.kind = Proof::Kind::Inclusion;
        auto record = store.get(n.entries[i].value);
        if (record) proof.record = *record;
        return proof;
      }
      proof.kind = Proof::Kind::Exclusion;
      return proof;
    }
    if (!n.children[i]) {
      proof.kind = Proof::Kind::Exclusion;
      return proof;
    }
    current = *n.children[i];
  }
}

namespace {

// Walks the proof path; returns the proven value CID for inclusion, a
// present-but-valueless marker handled by callers, or nullopt on any defect.
std::optional<std::optional<Cid>> walk_proof(const Cid& mst_root, const Proof& proof) {
  if (proof.blocks.empty()) return std::nullopt;
  int klayer = key_layer(proof.key);
  Cid expected = mst_root;
  int expected_layer = -1;  // unknown until the root block is parsed
  for (size_t b = 0; b < proof.blocks.size(); ++b) {
    const Bytes& block = proof.blocks[b];
    if (Cid::of(block) != expected) return std::nullopt;
    Mst::ParsedNode n;
    try {
      n = Mst::parse_node(block);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (expected_layer >= 0 && n.layer != expected_layer) return std::nullopt;
    bool last = b + 1 == proof.blocks.size();
    if (klayer > n.layer) {
      // key cannot live anywhere under this node
      if (!last || proof.kind != Proof::Kind::Exclusion) return std::nullopt;
      return std::optional<Cid>(std::nullopt);
    }
    size_t i = entry_position(n, proof.key);
    if (n.layer == klayer) {
      if (!last) return std::nullopt;
      bool present = i < n.entries.size() && n.entries[i].key == proof.key;
      if (proof.kind == Proof::Kind::Inclusion) {
        if (!present) return std::nullopt;
        return std::optional<Cid>(n.entries[i].value);
      }
      if (present) return std::nullopt;
      return std::optional<Cid>(std::nullopt);
    }
    // must descend
    if (!n.children[i]) {
      if (!last || proof.kind != Proof::Kind::Exclusion) return std::nullopt;
      return std::optional<Cid>(std::nullopt);
    }
    if (last) return std::nullopt;  // path stops short of the decision point
    expected = *n.children[i];
    expected_layer = n.layer - 1;
  }
  return std::nullopt;
}

}  // namespace

bool verify_proof(const Cid& mst_root, const Proof& proof) {
  auto walked = walk_proof(mst_root, proof);
  if (!walked) return false;
  if (proof.kind == Proof::Kind::Inclusion) {
    if (!*walked) return false;
    if (proof.record && Cid::of(*proof.record) != **walked) return false;
    return true;
  }
  return !*walked;
}

std::optional<Cid> verify_inclusion(const Cid& mst_root, const Proof& proof) {
  if (proof.kind != Proof::Kind::Inclusion) return std::nullopt;
  if (!verify_proof(mst_root, proof)) return std::nullopt;
  auto walked = walk_proof(mst_root, proof);
  return walked ? *walked : std::nullopt;
}

std::map<std::string, Cid> enumerate(const BlockStore& store, std::optional<Cid> root) {
  std::map<std::string, Cid> out;
  if (root) enumerate_into(store, *root, out);
  return out;
}

namespace {

void diff_subtrees(const BlockStore& store, std::optional<Cid> a, std::optional<Cid> b,
                   RepoDiff& out) {
  if (a == b) return;
  std::map<std::string, Cid> lhs = enumerate(store, a);
  std::map<std::string, Cid> rhs = enumerate(store, b);
  auto la = lhs.begin();
  auto rb = rhs.begin();
  while (la != lhs.end() || rb != rhs.end()) {
    if (rb == rhs.end() || (la != lhs.end() && la->first < rb->first)) {
      out.deleted.push_back({la->first, la->second, std::nullopt});
      ++la;
    } else if (la == lhs.end() || rb->first < la->first) {
      out.created.push_back({rb->first, std::nullopt, rb->second});
      ++rb;
    } else {
      if (la->second != rb->second) {
        out.updated.push_back({la->first, la->second, rb->second});
      }
      ++la;
      ++rb;
    }
  }
}

void diff_nodes(const BlockStore& store, std::optional<Cid> a, std::optional<Cid> b,
                RepoDiff& out) {
  if (a == b) return;
  if (!a || !b) {
    diff_subtrees(store, a, b, out);
    return;
  }
  auto wa = load_block(store, *a);
  auto wb = load_block(store, *b);
  if (!wa || !wb) throw RepoError(RepoErrorKind::MissingBlock, "missing MST block in diff");
  const Mst::ParsedNode& na = wa->node;
  const Mst::ParsedNode& nb = wb->node;
  bool aligned = na.layer == nb.layer && na.entries.size() == nb.entries.size();
  if (aligned) {
    for (size_t i = 0; i < na.entries.size(); ++i) {
      if (na.entries[i].key != nb.entries[i].key) {
        aligned = false;
        break;
      }
    }
  }
  if (!aligned) {
    // entry sets diverge; fall back to enumerating this pair of subtrees
    diff_subtrees(store, a, b, out);
    return;
  }
  for (size_t i = 0; i < na.entries.size(); ++i) {
    if (na.entries[i].value != nb.entries[i].value) {
      out.updated.push_back({na.entries[i].key, na.entries[i].value, nb.entries[i].value});
    }
  }
  for (size_t i = 0; i < na.children.size(); ++i) {
    diff_nodes(store, na.children[i], nb.children[i], out);
  }
}

void sort_diff(std::vector<DiffEntry>& v) {
  std::sort(v.begin(), v.end(),
            [](const DiffEntry& x, const DiffEntry& y) { return x.key < y.key; });
}

}  // namespace

RepoDiff diff(const BlockStore& store, std::optional<Cid> old_root,
              std::optional<Cid> new_root) {
  RepoDiff out;
  diff_nodes(store, old_root, new_root, out);
  sort_diff(out.created);
  sort_diff(out.updated);
  sort_diff(out.deleted);
  return out;
}

Repository Repository::create(BlockStore& store, std::string did, const Signer& signer) {
  Repository repo(store, std::move(did));
  repo.apply_writes({}, signer);
  return repo;
}

Repository Repository::open(BlockStore& store, const Cid& head_commit) {
  auto block = store.get(head_commit);
  if (!block) throw RepoError(RepoErrorKind::MissingBlock, "missing commit block");
  auto commit = parse_commit(*block);
  if (!commit) throw RepoError(RepoErrorKind::CorruptArchive, "head block is not a commit");
  Repository repo(store, commit->did);
  repo.head_ = head_commit;
  repo.head_commit_ = *commit;
  repo.tree_ = Mst::load(store, commit->data);
  return repo;
}

ApplyResult Repository::apply_writes(const std::vector<RepoWrite>& writes,
                                     const Signer& signer) {
  // stage on a copy; commit atomically
  Mst staged = tree_;
  ApplyResult result;
  std::set<std::string> touched;
  for (const RepoWrite& w : writes) {
    if (!RecordPath::valid_collection(w.path.collection) ||
        !RecordPath::valid_rkey(w.path.rkey)) {
      throw RepoError(RepoErrorKind::InvalidKey, "invalid record path " + w.path.key());
    }
    std::string key = w.path.key();
    if (!touched.insert(key).second) {
      throw RepoError(RepoErrorKind::InvalidKey, "duplicate path in write batch: " + key);
    }
    if (w.action == RepoWrite::Action::Put) {
      Bytes record = codec::encode(*w.record);
      Cid rcid = Cid::of(record);
      bool existed = staged.get(key).has_value();
      staged.put(key, rcid);
      result.blocks[rcid] = std::move(record);
      result.ops.push_back({existed ? RecordOp::Action::Update : RecordOp::Action::Create,
                            key, rcid});
    } else {
      if (!staged.remove(key)) {
        throw RepoError(RepoErrorKind::PathNotFound, "delete of absent path " + key);
      }
      result.ops.push_back({RecordOp::Action::Delete, key, std::nullopt});
    }
  }

  std::vector<Cid> fresh;
  Cid root = staged.persist(*store_, &fresh);

  Commit commit;
  commit.did = did_;
  commit.version = 1;
  if (!head_commit_.sig.empty()) commit.prev = head_;
  commit.data = root;
  commit.sig = signer(encode_commit(commit, false));

  Bytes commit_block = encode_commit(commit, true);
  auto [commit_cid, inserted] = store_->put(commit_block);
  (void)inserted;

  for (const Cid& cid : fresh) {
    auto block = store_->get(cid);
    if (!block) throw RepoError(RepoErrorKind::StorageFailure, "fresh block vanished");
    result.blocks[cid] = std::move(*block);
  }
  for (const auto& [rcid, block] : result.blocks) {
    store_->put(block);  // ensure records persisted even when deduplicated
  }
  result.blocks[commit_cid] = std::move(commit_block);

  tree_ = std::move(staged);
  head_ = commit_cid;
  head_commit_ = commit;
  result.commit = commit;
  result.commit_cid = commit_cid;
  return result;
}

std::optional<std::pair<Value, Cid>> Repository::get_record(const RecordPath& path) const {
  auto cid = tree_.get(path.key());
  if (!cid) return std::nullopt;
  auto block = store_->get(*cid);
  if (!block) throw RepoError(RepoErrorKind::MissingBlock, "record block missing");
  return std::make_pair(codec::decode(*block), *cid);
}

Proof Repository::prove(const std::string& key) const {
  return build_proof(*store_, head_commit_.data, key);
}

Bytes Repository::export_archive() const {
  return repo::export_archive(*store_, head_);
}

namespace {

void put_frame(Bytes& out, BytesView payload) {
  put_uvarint(out, payload.size());
  append(out, payload);
}

void collect_reachable(const BlockStore& store, const Cid& mst_root,
                       std::map<Cid, Bytes>& out) {
  auto block = store.get(mst_root);
  if (!block) throw RepoError(RepoErrorKind::MissingBlock, "missing block " + mst_root.str());
  Mst::ParsedNode node = Mst::parse_node(*block);
  out.emplace(mst_root, std::move(*block));
  for (const auto& child : node.children) {
    if (child && !out.count(*child)) collect_reachable(store, *child, out);
  }
  for (const auto& entry : node.entries) {
    if (!out.count(entry.value)) {
      auto record = store.get(entry.value);
      if (!record) {
        throw RepoError(RepoErrorKind::MissingBlock, "missing record " + entry.value.str());
      }
      out.emplace(entry.value, std::move(*record));
    }
  }
}

}  // namespace

Bytes export_archive(const BlockStore& store, const Cid& head) {
  auto commit_block = store.get(head);
  if (!commit_block) throw RepoError(RepoErrorKind::MissingBlock, "missing commit block");
  auto commit = parse_commit(*commit_block);
  if (!commit) throw RepoError(RepoErrorKind::CorruptArchive, "head block is not a commit");

  std::map<Cid, Bytes> blocks;
  blocks.emplace(head, *commit_block);
  collect_reachable(store, commit->data, blocks);

  Bytes out;
  put_frame(out, head.bytes());
  for (const auto& [cid, block] : blocks) {
    Bytes payload = cid.bytes();
    append(payload, block);
    put_frame(out, payload);
  }
  return out;
}

ImportResult import_archive(BytesView archive, BlockStore& into) {
  size_t pos = 0;
  auto header_len = get_uvarint(archive, pos);
  if (!header_len || *header_len != 36 || pos + 36 > archive.size()) {
    throw RepoError(RepoErrorKind::CorruptArchive, "bad archive header");
  }
  auto root = Cid::from_bytes(archive.subspan(pos, 36));
  pos += 36;
  if (!root) throw RepoError(RepoErrorKind::CorruptArchive, "bad root CID");

  MemoryBlockStore staging;
  while (pos < archive.size()) {
    auto len = get_uvarint(archive, pos);
    if (!len || *len < 37 || pos + *len > archive.size()) {
      throw RepoError(RepoErrorKind::CorruptArchive, "bad archive frame");
    }
    auto cid = Cid::from_bytes(archive.subspan(pos, 36));
    if (!cid) throw RepoError(RepoErrorKind::CorruptArchive, "bad frame CID");
    Bytes block(archive.begin() + pos + 36, archive.begin() + pos + *len);
    pos += *len;
    if (Cid::of(block) != *cid) {
      throw RepoError(RepoErrorKind::HashMismatch,
                      "block does not match its CID: " + cid->str());
    }
    staging.put(std::move(block));
  }

  auto commit_block = staging.get(*root);
  if (!commit_block) throw RepoError(RepoErrorKind::CorruptArchive, "root commit absent");
  auto commit = parse_commit(*commit_block);
  if (!commit) throw RepoError(RepoErrorKind::CorruptArchive, "root block is not a commit");
  if (commit->sig.size() != 64) {
    throw RepoError(RepoErrorKind::CorruptArchive, "commit signature malformed");
  }
  std::map<Cid, Bytes> reachable;
  try {
    collect_reachable(staging, commit->data, reachable);
  } catch (const RepoError& e) {
    if (e.kind() == RepoErrorKind::MissingBlock) {
      throw RepoError(RepoErrorKind::CorruptArchive, e.what());
    }
    throw;
  }

  into.put(*commit_block);
  for (const auto& [cid, block] : reachable) into.put(block);
  return ImportResult{*root, *commit};
}

}  // namespace atproto::repo
