#pragma once

#include <map>
#include <optional>

#include "atproto/bytes.hpp"
#include "atproto/cid.hpp"

namespace atproto::repo {

// Content-addressed, append-only block storage. Deletion semantics live in
// the MST; unreachable blocks stay until a maintenance sweep.
class BlockStore {
 public:
  virtual ~BlockStore() = default;
  virtual std::optional<Bytes> get(const codec::Cid& cid) const = 0;
  virtual bool has(const codec::Cid& cid) const = 0;
  // Returns the CID and whether the block was newly inserted.
  virtual std::pair<codec::Cid, bool> put(Bytes block) = 0;
};

class MemoryBlockStore : public BlockStore {
 public:
  std::optional<Bytes> get(const codec::Cid& cid) const override {
    auto it = blocks_.find(cid);
    if (it == blocks_.end()) return std::nullopt;
    return it->second;
  }

  bool has(const codec::Cid& cid) const override { return blocks_.count(cid) > 0; }

  std::pair<codec::Cid, bool> put(Bytes block) override {
    codec::Cid cid = codec::Cid::of(block);
    auto [it, inserted] = blocks_.emplace(cid, std::move(block));
    return {cid, inserted};
  }

  size_t size() const { return blocks_.size(); }
  const std::map<codec::Cid, Bytes>& blocks() const { return blocks_; }

 private:
  std::map<codec::Cid, Bytes> blocks_;
};

}  // namespace atproto::repo
