#include "atproto/cid.hpp"

#include <algorithm>

#include "atproto/base32.hpp"
#include "atproto/crypto.hpp"

namespace atproto::codec {

namespace {
// version 1, dag-cbor (0x71), sha2-256 (0x12), 32-byte digest
constexpr std::array<std::uint8_t, 4> kPrefix{0x01, 0x71, 0x12, 0x20};
}  // namespace

Cid Cid::of(BytesView data) {
  return Cid(crypto::sha256(data));
}

Bytes Cid::bytes() const {
  Bytes out(kPrefix.begin(), kPrefix.end());
  out.insert(out.end(), digest_.begin(), digest_.end());
  return out;
}

std::optional<Cid> Cid::from_bytes(BytesView raw) {
  if (raw.size() != 36) return std::nullopt;
  if (!std::equal(kPrefix.begin(), kPrefix.end(), raw.begin())) return std::nullopt;
  std::array<std::uint8_t, 32> digest;
  std::copy(raw.begin() + 4, raw.end(), digest.begin());
  return Cid(digest);
}

std::string Cid::str() const {
  return "b" + base32::encode(bytes());
}

std::optional<Cid> Cid::parse(std::string_view text) {
  if (text.size() < 2 || text[0] != 'b') return std::nullopt;
  auto raw = base32::decode(text.substr(1));
  if (!raw) return std::nullopt;
  return from_bytes(*raw);
}

}  // namespace atproto::codec
