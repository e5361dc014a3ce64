#pragma once

#include <optional>
#include <string>

#include "atproto/bytes.hpp"

namespace atproto::base32 {

// RFC 4648 base32, lowercase alphabet, no padding. Used for CID strings
// (with the "b" multibase prefix added by the caller) and for did:plc
// identifiers.
std::string encode(BytesView data);
std::optional<Bytes> decode(std::string_view text);

// Base32-sortable alphabet ("234567abcdefghijklmnopqrstuvwxyz"): encodes a
// 64-bit value as 13 characters whose lexicographic order equals numeric
// order. Used for generated record keys.
std::string encode_sortable_u64(std::uint64_t v);

}  // namespace atproto::base32
