#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atproto/blockstore.hpp"
#include "atproto/cbor.hpp"
#include "atproto/mst.hpp"

namespace atproto::repo {

enum class RepoErrorKind {
  PathNotFound,
  InvalidKey,
  StorageFailure,
  MissingBlock,
  CorruptArchive,
  HashMismatch,
};

class RepoError : public std::runtime_error {
 public:
  RepoError(RepoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  RepoErrorKind kind() const { return kind_; }

 private:
  RepoErrorKind kind_;
};

// collection: dotted lowercase name; rkey: [A-Za-z0-9._:~-]{1,512}.
struct RecordPath {
  std::string collection;
  std::string rkey;

  std::string key() const { return collection + "/" + rkey; }
  static std::optional<RecordPath> parse(std::string_view key);
  static bool valid_collection(std::string_view name);
  static bool valid_rkey(std::string_view rkey);

  auto operator<=>(const RecordPath&) const = default;
};

struct Commit {
  std::string did;
  std::int64_t version = 1;
  std::optional<codec::Cid> prev;
  codec::Cid data;  // MST root
  Bytes sig;
};

Bytes encode_commit(const Commit& commit, bool with_sig);
std::optional<Commit> parse_commit(BytesView block);

using Signer = std::function<Bytes(BytesView)>;

bool verify_commit(const Commit& commit, BytesView public_key);

// Merkle path from the MST root to the decision point for one key. The
// blocks are ordered root-first; `record` carries the record bytes for
// inclusion proofs.
struct Proof {
  enum class Kind { Inclusion, Exclusion };
  Kind kind = Kind::Exclusion;
  std::string key;
  std::vector<Bytes> blocks;
  std::optional<Bytes> record;
};

Proof build_proof(const BlockStore& store, const codec::Cid& mst_root,
                  const std::string& key);

// Stateless: needs only the proof blocks. Returns false on any defect.
bool verify_proof(const codec::Cid& mst_root, const Proof& proof);
// As above, but surfaces the proven value CID for inclusion proofs.
std::optional<codec::Cid> verify_inclusion(const codec::Cid& mst_root, const Proof& proof);

struct DiffEntry {
  std::string key;
  std::optional<codec::Cid> old_cid;
  std::optional<codec::Cid> new_cid;
};

struct RepoDiff {
  std::vector<DiffEntry> created;
  std::vector<DiffEntry> updated;
  std::vector<DiffEntry> deleted;
  bool empty() const { return created.empty() && updated.empty() && deleted.empty(); }
};

// Set difference of the two trees, skipping shared subtrees by CID equality.
// nullopt roots denote the empty tree.
RepoDiff diff(const BlockStore& store, std::optional<codec::Cid> old_root,
              std::optional<codec::Cid> new_root);

// Full key -> record-CID enumeration of a serialized tree.
std::map<std::string, codec::Cid> enumerate(const BlockStore& store,
                                            std::optional<codec::Cid> root);

struct RepoWrite {
  enum class Action { Put, Delete };
  Action action = Action::Put;
  RecordPath path;
  std::optional<codec::Value> record;

  static RepoWrite put(RecordPath path, codec::Value record) {
    return RepoWrite{Action::Put, std::move(path), std::move(record)};
  }
  static RepoWrite del(RecordPath path) {
    return RepoWrite{Action::Delete, std::move(path), std::nullopt};
  }
};

struct RecordOp {
  enum class Action { Create, Update, Delete };
  Action action = Action::Create;
  std::string path;                  // "collection/rkey"
  std::optional<codec::Cid> record;  // absent for deletes
};

struct ApplyResult {
  Commit commit;
  codec::Cid commit_cid;
  std::vector<RecordOp> ops;
  // Blocks sufficient for stateless verification of every op: the commit,
  // the new MST nodes, and the written records.
  std::map<codec::Cid, Bytes> blocks;
};

// One signed MST repository. Single writer at a time; readers may hold a
// snapshot at a commit boundary.
class Repository {
 public:
  static Repository create(BlockStore& store, std::string did, const Signer& signer);
  static Repository open(BlockStore& store, const codec::Cid& head_commit);

  ApplyResult apply_writes(const std::vector<RepoWrite>& writes, const Signer& signer);

  std::optional<std::pair<codec::Value, codec::Cid>> get_record(const RecordPath& path) const;
  Proof prove(const std::string& key) const;

  const codec::Cid& head() const { return head_; }
  const Commit& head_commit() const { return head_commit_; }
  const codec::Cid& mst_root() const { return head_commit_.data; }
  const std::string& did() const { return did_; }
  std::vector<MstEntry> list_records() const { return tree_.entries(); }

  Bytes export_archive() const;

 private:
  Repository(BlockStore& store, std::string did) : store_(&store), did_(std::move(did)) {}

  BlockStore* store_;
  std::string did_;
  Mst tree_;
  codec::Cid head_;
  Commit head_commit_;
};

struct ImportResult {
  codec::Cid root;  // head commit CID
  Commit commit;
};

// Verifies every frame's CID and the commit structure, then copies the
// blocks into `into`. Throws RepoError{CorruptArchive|HashMismatch}.
ImportResult import_archive(BytesView archive, BlockStore& into);

// Archive of every block reachable from `head` through data links.
Bytes export_archive(const BlockStore& store, const codec::Cid& head);

}  // namespace atproto::repo
