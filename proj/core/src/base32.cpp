#include "atproto/base32.hpp"

#include <array>

namespace atproto::base32 {

namespace {

constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz234567";
constexpr std::string_view kSortable = "234567abcdefghijklmnopqrstuvwxyz";

std::array<int, 256> make_reverse(std::string_view alphabet) {
  std::array<int, 256> rev{};
  rev.fill(-1);
  for (size_t i = 0; i < alphabet.size(); ++i) {
    rev[static_cast<unsigned char>(alphabet[i])] = static_cast<int>(i);
  }
  return rev;
}

const std::array<int, 256> kReverse = make_reverse(kAlphabet);

}  // namespace

std::string encode(BytesView data) {
  std::string out;
  out.reserve((data.size() * 8 + 4) / 5);
  std::uint32_t buffer = 0;
  int bits = 0;
  for (std::uint8_t byte : data) {
    buffer = (buffer << 8) | byte;
    bits += 8;
    while (bits >= 5) {
      bits -= 5;
      out.push_back(kAlphabet[(buffer >> bits) & 0x1f]);
    }
  }
  if (bits > 0) {
    out.push_back(kAlphabet[(buffer << (5 - bits)) & 0x1f]);
  }
  return out;
}

std::optional<Bytes> decode(std::string_view text) {
  Bytes out;
  out.reserve(text.size() * 5 / 8);
  std::uint32_t buffer = 0;
  int bits = 0;
  for (char c : text) {
    int v = kReverse[static_cast<unsigned char>(c)];
    if (v < 0) return std::nullopt;
    buffer = (buffer << 5) | static_cast<std::uint32_t>(v);
    bits += 5;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((buffer >> bits) & 0xff));
    }
  }
  // Leftover bits must be zero padding, never a partial byte of data.
  if (bits > 0 && (buffer & ((1u << bits) - 1)) != 0) return std::nullopt;
  return out;
}

std::string encode_sortable_u64(std::uint64_t v) {
  std::string out(13, '2');
  for (int i = 12; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kSortable[v & 0x1f];
    v >>= 5;
  }
  return out;
}

}  // namespace atproto::base32
