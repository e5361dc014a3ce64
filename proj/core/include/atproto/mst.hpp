#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atproto/blockstore.hpp"
#include "atproto/cbor.hpp"

namespace atproto::repo {

// Merkle Search Tree keyed by "collection/rkey" strings, balanced by a
// per-key layer derived from the key hash (fanout 4, expected depth
// log4(n)). The tree shape, and therefore the root CID, is a pure function
// of the key -> value-CID map.
//
// Canonical shape: a node at layer L holds exactly the layer-L keys of its
// range; each of its child pointers references a node at layer L-1 (nodes
// with no entries act as pass-throughs toward deeper keys); the root is
// trimmed to the highest layer holding any key, and the empty tree is a
// single entry-less node at layer 0.

int key_layer(std::string_view key);

struct MstEntry {
  std::string key;
  codec::Cid value;
};

struct MstNode;
using MstNodeRef = std::shared_ptr<const MstNode>;

struct MstNode {
  int layer = 0;
  // children.size() == entries.size() + 1; entries sorted strictly ascending.
  std::vector<MstNodeRef> children;
  std::vector<MstEntry> entries;
};

class Mst {
 public:
  Mst() = default;

  bool empty() const { return !root_; }
  size_t size() const;

  void put(const std::string& key, const codec::Cid& value);
  // Returns false when the key was absent.
  bool remove(const std::string& key);
  std::optional<codec::Cid> get(const std::string& key) const;

  // In-order (key, value) enumeration.
  std::vector<MstEntry> entries() const;

  // Serializes every node into the store and returns the root CID. Blocks
  // already present are not rewritten; newly inserted node CIDs are appended
  // to `fresh` when provided.
  codec::Cid persist(BlockStore& store, std::vector<codec::Cid>* fresh = nullptr) const;

  // Reconstructs the in-memory tree from serialized nodes.
  static Mst load(const BlockStore& store, const codec::Cid& root);

  // Node (de)serialization, shared with proof verification.
  static Bytes encode_node(const MstNode& node,
                           const std::vector<std::optional<codec::Cid>>& child_cids);
  struct ParsedNode {
    int layer = 0;
    std::vector<std::optional<codec::Cid>> children;
    std::vector<MstEntry> entries;
  };
  // Throws CborError / std::runtime_error on malformed or non-canonical nodes.
  static ParsedNode parse_node(BytesView block);

  const MstNodeRef& root() const { return root_; }

 private:
  MstNodeRef root_;
};

}  // namespace atproto::repo
