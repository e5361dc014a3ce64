#include "atproto/crypto.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

#include "atproto/base32.hpp"

namespace atproto::crypto {

namespace {

constexpr std::uint8_t kEd25519SchemeId = 0xed;

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
  });
}

}  // namespace

Digest sha256(BytesView data) {
  ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

KeyPair generate_keypair() {
  ensure_sodium();
  KeyPair kp;
  kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
  kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_keypair(kp.public_key.data(), kp.secret_key.data());
  return kp;
}

KeyPair keypair_from_seed(BytesView seed32) {
  ensure_sodium();
  if (seed32.size() != crypto_sign_SEEDBYTES) {
    throw std::invalid_argument("ed25519 seed must be 32 bytes");
  }
  KeyPair kp;
  kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
  kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed32.data());
  return kp;
}

Bytes sign(BytesView message, const KeyPair& key) {
  ensure_sodium();
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(),
                       key.secret_key.data());
  return sig;
}

bool verify(BytesView message, BytesView signature, BytesView public_key) {
  ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) return false;
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(),
                                     message.size(), public_key.data()) == 0;
}

std::string encode_public_key(BytesView public_key) {
  Bytes tagged;
  tagged.reserve(public_key.size() + 1);
  tagged.push_back(kEd25519SchemeId);
  append(tagged, public_key);
  return "b" + base32::encode(tagged);
}

std::optional<Bytes> decode_public_key(std::string_view encoded) {
  if (encoded.size() < 2 || encoded[0] != 'b') return std::nullopt;
  auto raw = base32::decode(encoded.substr(1));
  if (!raw || raw->size() != crypto_sign_PUBLICKEYBYTES + 1) return std::nullopt;
  if ((*raw)[0] != kEd25519SchemeId) return std::nullopt;
  return Bytes(raw->begin() + 1, raw->end());
}

std::string encode_secret_key(BytesView secret_key) {
  Bytes tagged;
  tagged.reserve(secret_key.size() + 1);
  tagged.push_back(kEd25519SchemeId);
  append(tagged, secret_key);
  return "b" + base32::encode(tagged);
}

std::optional<Bytes> decode_secret_key(std::string_view encoded) {
  if (encoded.size() < 2 || encoded[0] != 'b') return std::nullopt;
  auto raw = base32::decode(encoded.substr(1));
  if (!raw || raw->size() != crypto_sign_SECRETKEYBYTES + 1) return std::nullopt;
  if ((*raw)[0] != kEd25519SchemeId) return std::nullopt;
  return Bytes(raw->begin() + 1, raw->end());
}

PasswordHasher make_password_hasher(std::string_view profile) {
  ensure_sodium();
  unsigned long long ops = crypto_pwhash_OPSLIMIT_INTERACTIVE;
  size_t mem = crypto_pwhash_MEMLIMIT_INTERACTIVE;
  if (profile == "fast") {
    ops = crypto_pwhash_OPSLIMIT_MIN;
    mem = crypto_pwhash_MEMLIMIT_MIN;
  }
  PasswordHasher h;
  h.hash = [ops, mem](std::string_view password) {
    std::string out(crypto_pwhash_STRBYTES, '\0');
    if (crypto_pwhash_str(out.data(), password.data(), password.size(), ops, mem) != 0) {
      throw std::runtime_error("password hashing failed (out of memory)");
    }
    out.resize(out.find('\0'));
    return out;
  };
  h.check = [](std::string_view password, const std::string& stored) {
    return crypto_pwhash_str_verify(stored.c_str(), password.data(), password.size()) == 0;
  };
  return h;
}

}  // namespace atproto::crypto
