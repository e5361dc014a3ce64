#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include "atproto/bytes.hpp"

namespace atproto::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(BytesView data);

// Ed25519. Public keys are 32 bytes; stored key strings are multibase
// base32 ("b" prefix) over a one-byte scheme id (0xed) plus the raw key.
struct KeyPair {
  Bytes public_key;  // 32 bytes
  Bytes secret_key;  // 64 bytes (libsodium layout)
};

KeyPair generate_keypair();
KeyPair keypair_from_seed(BytesView seed32);

Bytes sign(BytesView message, const KeyPair& key);
bool verify(BytesView message, BytesView signature, BytesView public_key);

std::string encode_public_key(BytesView public_key);
std::optional<Bytes> decode_public_key(std::string_view encoded);

// Secret-key material serialized for custody transfer (account export).
std::string encode_secret_key(BytesView secret_key);
std::optional<Bytes> decode_secret_key(std::string_view encoded);

// Password hashing profile. "fast" trades memory-hardness for test speed;
// "strong" uses interactive Argon2id limits.
struct PasswordHasher {
  std::function<std::string(std::string_view password)> hash;
  std::function<bool(std::string_view password, const std::string& stored)> check;
};

PasswordHasher make_password_hasher(std::string_view profile);

}  // namespace atproto::crypto
