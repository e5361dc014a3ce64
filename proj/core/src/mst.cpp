#include "atproto/mst.hpp"

#include <bit>
#include <cassert>
#include <map>
#include <stdexcept>

#include "atproto/crypto.hpp"

namespace atproto::repo {

using codec::Cid;
using codec::CidLink;
using codec::Value;

int key_layer(std::string_view key) {
  crypto::Digest d = crypto::sha256(
      BytesView(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()));
  int zeros = 0;
  for (std::uint8_t byte : d) {
    if (byte == 0) {
      zeros += 8;
      continue;
    }
    zeros += std::countl_zero(byte);
    break;
  }
  return zeros / 2;
}

namespace {

MstNodeRef make_node(int layer, std::vector<MstNodeRef> children,
                     std::vector<MstEntry> entries) {
  assert(children.size() == entries.size() + 1);
  auto n = std::make_shared<MstNode>();
  n->layer = layer;
  n->children = std::move(children);
  n->entries = std::move(entries);
  return n;
}

// Index of the child gap / entry position for `key` within `n`:
// first entry with entry.key >= key.
size_t position_of(const MstNode& n, const std::string& key) {
  size_t i = 0;
  while (i < n.entries.size() && n.entries[i].key < key) ++i;
  return i;
}

// Drops entry-less nodes that lead nowhere; keeps pass-throughs.
MstNodeRef normalize(MstNodeRef n) {
  if (n && n->entries.empty() && !n->children[0]) return nullptr;
  return n;
}

std::pair<MstNodeRef, MstNodeRef> split(const MstNodeRef& n, int layer,
                                        const std::string& key) {
  if (!n) return {nullptr, nullptr};
  size_t i = position_of(*n, key);
  auto [cl, cr] = split(n->children[i], layer - 1, key);

  std::vector<MstNodeRef> lc(n->children.begin(), n->children.begin() + i);
  lc.push_back(cl);
  std::vector<MstEntry> le(n->entries.begin(), n->entries.begin() + i);

  std::vector<MstNodeRef> rc;
  rc.push_back(cr);
  rc.insert(rc.end(), n->children.begin() + i + 1, n->children.end());
  std::vector<MstEntry> re(n->entries.begin() + i, n->entries.end());

  return {normalize(make_node(layer, std::move(lc), std::move(le))),
          normalize(make_node(layer, std::move(rc), std::move(re)))};
}

MstNodeRef merge(const MstNodeRef& a, const MstNodeRef& b, int layer) {
  if (!a) return b;
  if (!b) return a;
  MstNodeRef mid = merge(a->children.back(), b->children.front(), layer - 1);
  std::vector<MstNodeRef> children(a->children.begin(), a->children.end() - 1);
  children.push_back(mid);
  children.insert(children.end(), b->children.begin() + 1, b->children.end());
  std::vector<MstEntry> entries = a->entries;
  entries.insert(entries.end(), b->entries.begin(), b->entries.end());
  return make_node(layer, std::move(children), std::move(entries));
}

MstNodeRef insert_at(const MstNodeRef& n, int layer, const std::string& key,
                     int key_layer_, const Cid& value) {
  if (!n) {
    if (key_layer_ == layer) {
      return make_node(layer, {nullptr, nullptr}, {MstEntry{key, value}});
    }
    return make_node(layer, {insert_at(nullptr, layer - 1, key, key_layer_, value)}, {});
  }
  size_t i = position_of(*n, key);
  if (key_layer_ == layer) {
    if (i < n->entries.size() && n->entries[i].key == key) {
      auto entries = n->entries;
      entries[i].value = value;
      return make_node(layer, n->children, std::move(entries));
    }
    auto [cl, cr] = split(n->children[i], layer - 1, key);
    std::vector<MstNodeRef> children(n->children.begin(), n->children.begin() + i);
    children.push_back(cl);
    children.push_back(cr);
    children.insert(children.end(), n->children.begin() + i + 1, n->children.end());
    std::vector<MstEntry> entries(n->entries.begin(), n->entries.begin() + i);
    entries.push_back(MstEntry{key, value});
    entries.insert(entries.end(), n->entries.begin() + i, n->entries.end());
    return make_node(layer, std::move(children), std::move(entries));
  }
  // descend; an equal key can only live at its own layer
  auto children = n->children;
  children[i] = insert_at(n->children[i], layer - 1, key, key_layer_, value);
  return make_node(layer, std::move(children), n->entries);
}

// Returns nullptr when the subtree becomes empty; false in .second when the
// key was not found.
std::pair<MstNodeRef, bool> remove_at(const MstNodeRef& n, int layer,
                                      const std::string& key, int key_layer_) {
  if (!n) return {nullptr, false};
  size_t i = position_of(*n, key);
  if (key_layer_ == layer) {
    if (i >= n->entries.size() || n->entries[i].key != key) return {n, false};
    MstNodeRef merged = merge(n->children[i], n->children[i + 1], layer - 1);
    std::vector<MstNodeRef> children(n->children.begin(), n->children.begin() + i);
    children.push_back(merged);
    children.insert(children.end(), n->children.begin() + i + 2, n->children.end());
    std::vector<MstEntry> entries(n->entries.begin(), n->entries.begin() + i);
    entries.insert(entries.end(), n->entries.begin() + i + 1, n->entries.end());
    return {normalize(make_node(layer, std::move(children), std::move(entries))), true};
  }
  auto [child, found] = remove_at(n->children[i], layer - 1, key, key_layer_);
  if (!found) return {n, false};
  auto children = n->children;
  children[i] = child;
  return {normalize(make_node(layer, std::move(children), n->entries)), true};
}

MstNodeRef wrap_to_layer(MstNodeRef n, int target_layer) {
  if (!n) return nullptr;
  while (n->layer < target_layer) {
    n = make_node(n->layer + 1, {n}, {});
  }
  return n;
}

void collect_entries(const MstNodeRef& n, std::vector<MstEntry>& out) {
  if (!n) return;
  for (size_t i = 0; i < n->entries.size(); ++i) {
    collect_entries(n->children[i], out);
    out.push_back(n->entries[i]);
  }
  collect_entries(n->children.back(), out);
}

size_t common_prefix_len(std::string_view a, std::string_view b) {
  size_t n = std::min(a.size(), b.size());
  size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

struct PersistCtx {
  BlockStore& store;
  std::vector<Cid>* fresh;
  std::map<const MstNode*, Cid> memo;
};

Cid persist_node(const MstNodeRef& n, PersistCtx& ctx) {
  auto it = ctx.memo.find(n.get());
  if (it != ctx.memo.end()) return it->second;
  std::vector<std::optional<Cid>> child_cids;
  child_cids.reserve(n->children.size());
  for (const auto& child : n->children) {
    if (child) {
      child_cids.push_back(persist_node(child, ctx));
    } else {
      child_cids.push_back(std::nullopt);
    }
  }
  Bytes block = Mst::encode_node(*n, child_cids);
  auto [cid, inserted] = ctx.store.put(std::move(block));
  if (inserted && ctx.fresh) ctx.fresh->push_back(cid);
  ctx.memo.emplace(n.get(), cid);
  return cid;
}

MstNodeRef load_node(const BlockStore& store, const Cid& cid) {
  auto block = store.get(cid);
  if (!block) throw std::runtime_error("missing MST block " + cid.str());
  Mst::ParsedNode parsed = Mst::parse_node(*block);
  auto n = std::make_shared<MstNode>();
  n->layer = parsed.layer;
  n->entries = std::move(parsed.entries);
  n->children.reserve(parsed.children.size());
  for (const auto& child : parsed.children) {
    MstNodeRef c = child ? load_node(store, *child) : nullptr;
    if (c && c->layer != n->layer - 1) {
      throw std::runtime_error("MST child at wrong layer");
    }
    n->children.push_back(std::move(c));
  }
  if (n->children.size() != n->entries.size() + 1) {
    throw std::runtime_error("malformed MST node");
  }
  return n;
}

}  // namespace

size_t Mst::size() const {
  return entries().size();
}

void Mst::put(const std::string& key, const codec::Cid& value) {
  int kl = key_layer(key);
  if (!root_) {
    root_ = insert_at(nullptr, kl, key, kl, value);
    return;
  }
  if (kl <= root_->layer) {
    root_ = insert_at(root_, root_->layer, key, kl, value);
    return;
  }
  auto [left, right] = split(root_, root_->layer, key);
  root_ = make_node(kl, {wrap_to_layer(left, kl - 1), wrap_to_layer(right, kl - 1)},
                    {MstEntry{key, value}});
}

bool Mst::remove(const std::string& key) {
  if (!root_) return false;
  int kl = key_layer(key);
  if (kl > root_->layer) return false;
  auto [next, found] = remove_at(root_, root_->layer, key, kl);
  if (!found) return false;
  // trim entry-less top levels
  while (next && next->entries.empty()) next = next->children[0];
  root_ = next;
  return true;
}

std::optional<codec::Cid> Mst::get(const std::string& key) const {
  int kl = key_layer(key);
  const MstNode* n = root_.get();
  if (!n || kl > n->layer) return std::nullopt;
  while (n) {
    size_t i = position_of(*n, key);
    if (n->layer == kl) {
      if (i < n->entries.size() && n->entries[i].key == key) return n->entries[i].value;
      return std::nullopt;
    }
    n = n->children[i].get();
  }
  return std::nullopt;
}

std::vector<MstEntry> Mst::entries() const {
  std::vector<MstEntry> out;
  collect_entries(root_, out);
  return out;
}

codec::Cid Mst::persist(BlockStore& store, std::vector<codec::Cid>* fresh) const {
  PersistCtx ctx{store, fresh, {}};
  MstNodeRef root = root_;
  if (!root) root = make_node(0, {nullptr}, {});
  return persist_node(root, ctx);
}

Mst Mst::load(const BlockStore& store, const codec::Cid& root) {
  Mst t;
  MstNodeRef n = load_node(store, root);
  if (n->entries.empty() && !n->children[0]) {
    return t;  // canonical empty tree
  }
  t.root_ = n;
  return t;
}

Bytes Mst::encode_node(const MstNode& node,
                       const std::vector<std::optional<codec::Cid>>& child_cids) {
  Value::Array entries;
  entries.reserve(node.entries.size());
  std::string prev;
  for (size_t i = 0; i < node.entries.size(); ++i) {
    const MstEntry& e = node.entries[i];
    size_t p = i == 0 ? 0 : common_prefix_len(prev, e.key);
    Value::Map em;
    em.emplace("k", Value(to_bytes(std::string_view(e.key).substr(p))));
    em.emplace("p", Value(static_cast<std::int64_t>(p)));
    em.emplace("t", child_cids[i + 1] ? Value(CidLink{*child_cids[i + 1]}) : Value(nullptr));
    em.emplace("v", Value(CidLink{e.value}));
    entries.push_back(Value(std::move(em)));
    prev = e.key;
  }
  Value::Map m;
  m.emplace("e", Value(std::move(entries)));
  m.emplace("h", Value(static_cast<std::int64_t>(node.layer)));
  m.emplace("l", child_cids[0] ? Value(CidLink{*child_cids[0]}) : Value(nullptr));
  return codec::encode(Value(std::move(m)));
}

Mst::ParsedNode Mst::parse_node(BytesView block) {
  Value v = codec::decode(block);
  if (!v.is_map()) throw std::runtime_error("MST node is not a map");
  const Value* e = v.at("e");
  const Value* h = v.at("h");
  const Value* l = v.at("l");
  if (!e || !e->is_array() || !h || !h->is_int() || !l || v.as_map().size() != 3) {
    throw std::runtime_error("MST node fields malformed");
  }
  ParsedNode out;
  out.layer = static_cast<int>(h->as_int());
  if (out.layer < 0) throw std::runtime_error("negative MST layer");
  if (l->is_link()) {
    out.children.push_back(l->as_link());
  } else if (l->is_null()) {
    out.children.push_back(std::nullopt);
  } else {
    throw std::runtime_error("MST left pointer malformed");
  }
  std::string prev;
  for (const Value& ev : e->as_array()) {
    const Value* k = ev.at("k");
    const Value* p = ev.at("p");
    const Value* t = ev.at("t");
    const Value* val = ev.at("v");
    if (!k || !k->is_bytes() || !p || !p->is_int() || !t || !val || !val->is_link() ||
        ev.as_map().size() != 4) {
      throw std::runtime_error("MST entry malformed");
    }
    size_t plen = static_cast<size_t>(p->as_int());
    if (p->as_int() < 0 || plen > prev.size()) throw std::runtime_error("bad MST prefix length");
    std::string key = prev.substr(0, plen) + to_string(k->as_bytes());
    if (!prev.empty()) {
      if (key <= prev) throw std::runtime_error("MST keys not ascending");
      if (common_prefix_len(prev, key) != plen) {
        throw std::runtime_error("MST prefix compression not canonical");
      }
    }
    if (key_layer(key) != out.layer) throw std::runtime_error("MST key at wrong layer");
    if (t->is_link()) {
      out.children.push_back(t->as_link());
    } else if (t->is_null()) {
      out.children.push_back(std::nullopt);
    } else {
      throw std::runtime_error("MST subtree pointer malformed");
    }
    out.entries.push_back(MstEntry{key, val->as_link()});
    prev = std::move(key);
  }
  return out;
}

}  // namespace atproto::repo
