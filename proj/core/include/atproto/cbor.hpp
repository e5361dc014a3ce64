#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "atproto/bytes.hpp"
#include "atproto/cid.hpp"

namespace atproto::codec {

// Restricted DAG-CBOR profile: null, bool, signed 64-bit integers, UTF-8
// text, byte strings, arrays, string-keyed maps, and CID links (tag 42).
// No floats, no indefinite lengths, no other tags.

enum class CborErrorKind {
  Malformed,             // truncation, bad header, trailing bytes, bad UTF-8
  NonCanonical,          // valid CBOR in the wrong form
  UnsupportedConstruct,  // floats, indefinite lengths, foreign tags
  Unencodable,           // value outside the profile on the encode side
};

class CborError : public std::runtime_error {
 public:
  CborError(CborErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CborErrorKind kind() const { return kind_; }

 private:
  CborErrorKind kind_;
};

struct CidLink {
  Cid cid;
  auto operator<=>(const CidLink&) const = default;
};

// Canonical map-key order: shorter key first, then lexicographic byte order.
struct KeyOrder {
  bool operator()(const std::string& a, const std::string& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
};

class Value {
 public:
  using Array = std::vector<Value>;
  using Map = std::map<std::string, Value, KeyOrder>;

  Value() : v_(nullptr) {}
  Value(std::nullptr_t) : v_(nullptr) {}
  Value(bool b) : v_(b) {}
  Value(std::int64_t i) : v_(i) {}
  Value(int i) : v_(static_cast<std::int64_t>(i)) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(Bytes b) : v_(std::move(b)) {}
  Value(Array a) : v_(std::move(a)) {}
  Value(Map m) : v_(std::move(m)) {}
  Value(CidLink l) : v_(l) {}
  Value(Cid c) : v_(CidLink{c}) {}

  bool is_null() const { return std::holds_alternative<std::nullptr_t>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_bytes() const { return std::holds_alternative<Bytes>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }
  bool is_map() const { return std::holds_alternative<Map>(v_); }
  bool is_link() const { return std::holds_alternative<CidLink>(v_); }

  bool as_bool() const { return std::get<bool>(v_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const Bytes& as_bytes() const { return std::get<Bytes>(v_); }
  const Array& as_array() const { return std::get<Array>(v_); }
  Array& as_array() { return std::get<Array>(v_); }
  const Map& as_map() const { return std::get<Map>(v_); }
  Map& as_map() { return std::get<Map>(v_); }
  const Cid& as_link() const { return std::get<CidLink>(v_).cid; }

  // Map conveniences; `at` returns nullptr when the key is absent.
  const Value* at(const std::string& key) const {
    if (!is_map()) return nullptr;
    auto it = as_map().find(key);
    return it == as_map().end() ? nullptr : &it->second;
  }

  bool operator==(const Value& other) const { return v_ == other.v_; }

 private:
  std::variant<std::nullptr_t, bool, std::int64_t, std::string, Bytes, Array,
               Map, CidLink>
      v_;
};

// Canonical encoding: definite lengths, minimal-length integer arguments,
// map keys sorted per KeyOrder, tag 42 over the identity-multibase-prefixed
// CID bytes. Throws CborError{Unencodable} for non-UTF-8 text.
Bytes encode(const Value& value);

// Strict decoder: accepts exactly the canonical form (re-encoding the result
// always reproduces the input bytes). Throws CborError.
Value decode(BytesView data);

// cid_of(data) is a pure function of the bytes.
inline Cid cid_of(BytesView data) { return Cid::of(data); }

bool valid_utf8(std::string_view s);

}  // namespace atproto::codec
