#pragma once

// Shared test helpers, including independent oracles: a naive DAG-CBOR
// encoder and a from-scratch SHA-256. Both stay deliberately separate from
// the library code paths they check.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "atproto/cbor.hpp"

namespace testutil {

using atproto::Bytes;
using atproto::BytesView;
using atproto::codec::Cid;
using atproto::codec::CidLink;
using atproto::codec::Value;

// --- independent SHA-256 (FIPS 180-4, straightforward implementation) ------

inline std::array<std::uint8_t, 32> reference_sha256(BytesView data) {
  static constexpr std::uint32_t k[64] = {
      0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
      0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
      0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
      0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
      0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
      0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
      0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
      0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
      0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
      0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
      0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
  std::uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                        0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  Bytes msg(data.begin(), data.end());
  std::uint64_t bitlen = static_cast<std::uint64_t>(msg.size()) * 8;
  msg.push_back(0x80);
  while (msg.size() % 64 != 56) msg.push_back(0);
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<std::uint8_t>(bitlen >> (i * 8)));

  auto rotr = [](std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); };
  for (size_t chunk = 0; chunk < msg.size(); chunk += 64) {
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i) {
      w[i] = (static_cast<std::uint32_t>(msg[chunk + i * 4]) << 24) |
             (static_cast<std::uint32_t>(msg[chunk + i * 4 + 1]) << 16) |
             (static_cast<std::uint32_t>(msg[chunk + i * 4 + 2]) << 8) |
             static_cast<std::uint32_t>(msg[chunk + i * 4 + 3]);
    }
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    std::uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t temp1 = hh + s1 + ch + k[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t temp2 = s0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + temp1;
      d = c;
      c = b;
      b = a;
      a = temp1 + temp2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }
  std::array<std::uint8_t, 32> out;
  for (int i = 0; i < 8; ++i) {
    out[i * 4] = static_cast<std::uint8_t>(h[i] >> 24);
    out[i * 4 + 1] = static_cast<std::uint8_t>(h[i] >> 16);
    out[i * 4 + 2] = static_cast<std::uint8_t>(h[i] >> 8);
    out[i * 4 + 3] = static_cast<std::uint8_t>(h[i]);
  }
  return out;
}

// --- naive independent DAG-CBOR encoder -------------------------------------
// Emits the canonical form while sharing no code with the library encoder.

inline void naive_head(Bytes& out, int major, std::uint64_t n) {
  std::uint8_t m = static_cast<std::uint8_t>(major << 5);
  if (n < 24) {
    out.push_back(static_cast<std::uint8_t>(m + n));
  } else if (n < 256) {
    out.push_back(m + 24);
    out.push_back(static_cast<std::uint8_t>(n));
  } else if (n < 65536) {
    out.push_back(m + 25);
    out.push_back(static_cast<std::uint8_t>(n / 256));
    out.push_back(static_cast<std::uint8_t>(n % 256));
  } else if (n <= 0xffffffffull) {
    out.push_back(m + 26);
    for (int shift = 24; shift >= 0; shift -= 8) {
      out.push_back(static_cast<std::uint8_t>((n >> shift) & 0xff));
    }
  } else {
    out.push_back(m + 27);
    for (int shift = 56; shift >= 0; shift -= 8) {
      out.push_back(static_cast<std::uint8_t>((n >> shift) & 0xff));
    }
  }
}

inline void naive_encode(const Value& v, Bytes& out) {
  if (v.is_null()) {
    out.push_back(0xf6);
  } else if (v.is_bool()) {
    out.push_back(v.as_bool() ? 0xf5 : 0xf4);
  } else if (v.is_int()) {
    long long n = v.as_int();
    if (n >= 0) {
      naive_head(out, 0, static_cast<std::uint64_t>(n));
    } else {
      naive_head(out, 1, static_cast<std::uint64_t>(-(n + 1)));
    }
  } else if (v.is_string()) {
    naive_head(out, 3, v.as_string().size());
    for (char c : v.as_string()) out.push_back(static_cast<std::uint8_t>(c));
  } else if (v.is_bytes()) {
    naive_head(out, 2, v.as_bytes().size());
    for (std::uint8_t b : v.as_bytes()) out.push_back(b);
  } else if (v.is_array()) {
    naive_head(out, 4, v.as_array().size());
    for (const Value& item : v.as_array()) naive_encode(item, out);
  } else if (v.is_map()) {
    std::vector<std::string> keys;
    for (const auto& [key, val] : v.as_map()) {
      (void)val;
      keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
      if (a.size() != b.size()) return a.size() < b.size();
      return a < b;
    });
    naive_head(out, 5, keys.size());
    for (const std::string& key : keys) {
      naive_head(out, 3, key.size());
      for (char c : key) out.push_back(static_cast<std::uint8_t>(c));
      naive_encode(v.as_map().at(key), out);
    }
  } else {
    naive_head(out, 6, 42);
    Bytes cid_bytes = v.as_link().bytes();
    naive_head(out, 2, cid_bytes.size() + 1);
    out.push_back(0x00);
    for (std::uint8_t b : cid_bytes) out.push_back(b);
  }
}

inline Bytes naive_encode(const Value& v) {
  Bytes out;
  naive_encode(v, out);
  return out;
}

// --- random value generation -------------------------------------------------

inline Value random_value(std::mt19937_64& rng, int depth = 0) {
  std::uniform_int_distribution<int> kind(0, depth >= 3 ? 5 : 7);
  switch (kind(rng)) {
    case 0: return Value(nullptr);
    case 1: return Value(static_cast<bool>(rng() & 1));
    case 2: {
      // bias toward header boundaries
      static const std::int64_t interesting[] = {
          0, 1, 23, 24, 255, 256, 65535, 65536, 4294967295ll, 4294967296ll,
          -1, -24, -25, -256, -257, 1ll << 40, INT64_MAX, INT64_MIN};
      if (rng() % 2) return Value(interesting[rng() % std::size(interesting)]);
      return Value(static_cast<std::int64_t>(rng()));
    }
    case 3: {
      size_t n = rng() % 40;
      std::string s;
      for (size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng() % 26));
      return Value(std::move(s));
    }
    case 4: {
      size_t n = rng() % 40;
      Bytes b;
      for (size_t i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(rng()));
      return Value(std::move(b));
    }
    case 5: {
      Bytes seed{static_cast<std::uint8_t>(rng())};
      return Value(CidLink{Cid::of(seed)});
    }
    case 6: {
      size_t n = rng() % 5;
      Value::Array items;
      for (size_t i = 0; i < n; ++i) items.push_back(random_value(rng, depth + 1));
      return Value(std::move(items));
    }
    default: {
      size_t n = rng() % 5;
      Value::Map m;
      for (size_t i = 0; i < n; ++i) {
        std::string key;
        size_t klen = 1 + rng() % 8;
        for (size_t j = 0; j < klen; ++j) key.push_back(static_cast<char>('a' + rng() % 26));
        m.emplace(std::move(key), random_value(rng, depth + 1));
      }
      return Value(std::move(m));
    }
  }
}

inline std::string random_rkey(std::mt19937_64& rng) {
  static const std::string alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._:~-";
  size_t n = 1 + rng() % 16;
  std::string out;
  for (size_t i = 0; i < n; ++i) out.push_back(alphabet[rng() % alphabet.size()]);
  return out;
}

}  // namespace testutil
