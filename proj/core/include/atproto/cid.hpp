#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>

#include "atproto/bytes.hpp"

namespace atproto::codec {

// CIDv1 over the DAG-CBOR codec with a SHA-256 multihash. The binary form
// is always 36 bytes: 0x01 0x71 0x12 0x20 followed by the digest. The
// string form is the lowercase base32 multibase rendering ("b" prefix,
// no padding).
class Cid {
 public:
  Cid() = default;
  explicit Cid(std::array<std::uint8_t, 32> digest) : digest_(digest) {}

  static Cid of(BytesView data);

  const std::array<std::uint8_t, 32>& digest() const { return digest_; }

  Bytes bytes() const;
  static std::optional<Cid> from_bytes(BytesView raw);

  std::string str() const;
  static std::optional<Cid> parse(std::string_view text);

  auto operator<=>(const Cid&) const = default;

 private:
  std::array<std::uint8_t, 32> digest_{};
};

}  // namespace atproto::codec
