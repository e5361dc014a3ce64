#pragma once

#include <optional>
#include <string>

#include "atproto/cbor.hpp"
#include "atproto/crypto.hpp"

namespace atproto::labels {

// A signed judgement about content. `uri` is an at-URI for record-level
// labels or a bare DID for account-level ones; `neg` retracts a previous
// label from the same labeler.
struct Label {
  std::uint64_t seq = 0;  // position in the labeler's stream
  std::string src;        // labeler did
  std::string uri;
  std::optional<codec::Cid> cid;  // subject record cid, when record-level
  std::string val;
  bool neg = false;
  std::int64_t created_at = 0;
  Bytes sig;

  Bytes signing_bytes() const;
  void sign(const crypto::KeyPair& key);
  bool verify(BytesView public_key) const;

  codec::Value to_value(bool with_sig = true) const;
  static std::optional<Label> from_value(const codec::Value& v);
};

std::string label_to_json(const Label& label);
std::optional<Label> label_from_json(const std::string& text);

}  // namespace atproto::labels
