#pragma once

#include <cstdint>
#include <optional>

#include "atproto/bytes.hpp"

namespace atproto {

// Unsigned LEB128, as used by the archive and stream framing.
inline void put_uvarint(Bytes& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v) | 0x80);
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

// Reads a uvarint at `pos`, advancing it. Returns nullopt on truncation or
// a value exceeding 64 bits.
inline std::optional<std::uint64_t> get_uvarint(BytesView data, size_t& pos) {
  std::uint64_t v = 0;
  int shift = 0;
  while (pos < data.size()) {
    std::uint8_t byte = data[pos++];
    if (shift == 63 && byte > 1) return std::nullopt;
    v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
    if ((byte & 0x80) == 0) return v;
    shift += 7;
    if (shift > 63) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace atproto
