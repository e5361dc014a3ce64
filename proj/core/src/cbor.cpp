#include "atproto/cbor.hpp"

#include <limits>

namespace atproto::codec {

namespace {

constexpr std::uint8_t kMajorUint = 0;
constexpr std::uint8_t kMajorNegInt = 1;
constexpr std::uint8_t kMajorBytes = 2;
constexpr std::uint8_t kMajorText = 3;
constexpr std::uint8_t kMajorArray = 4;
constexpr std::uint8_t kMajorMap = 5;
constexpr std::uint8_t kMajorTag = 6;
constexpr std::uint8_t kMajorSimple = 7;

constexpr std::uint64_t kCidTag = 42;

void put_head(Bytes& out, std::uint8_t major, std::uint64_t arg) {
  std::uint8_t m = static_cast<std::uint8_t>(major << 5);
  if (arg < 24) {
    out.push_back(m | static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xff) {
    out.push_back(m | 24);
    out.push_back(static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xffff) {
    out.push_back(m | 25);
    out.push_back(static_cast<std::uint8_t>(arg >> 8));
    out.push_back(static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xffffffffull) {
    out.push_back(m | 26);
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(arg >> s));
  } else {
    out.push_back(m | 27);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(arg >> s));
  }
}

void encode_into(Bytes& out, const Value& v);

void encode_link(Bytes& out, const Cid& cid) {
  put_head(out, kMajorTag, kCidTag);
  Bytes raw = cid.bytes();
  put_head(out, kMajorBytes, raw.size() + 1);
  out.push_back(0x00);  // identity multibase prefix
  append(out, raw);
}

void encode_into(Bytes& out, const Value& v) {
  if (v.is_null()) {
    out.push_back(0xf6);
  } else if (v.is_bool()) {
    out.push_back(v.as_bool() ? 0xf5 : 0xf4);
  } else if (v.is_int()) {
    std::int64_t i = v.as_int();
    if (i >= 0) {
      put_head(out, kMajorUint, static_cast<std::uint64_t>(i));
    } else {
      put_head(out, kMajorNegInt, static_cast<std::uint64_t>(-(i + 1)));
    }
  } else if (v.is_string()) {
    const std::string& s = v.as_string();
    if (!valid_utf8(s)) {
      throw CborError(CborErrorKind::Unencodable, "text value is not valid UTF-8");
    }
    put_head(out, kMajorText, s.size());
    append(out, BytesView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  } else if (v.is_bytes()) {
    put_head(out, kMajorBytes, v.as_bytes().size());
    append(out, v.as_bytes());
  } else if (v.is_array()) {
    put_head(out, kMajorArray, v.as_array().size());
    for (const Value& item : v.as_array()) encode_into(out, item);
  } else if (v.is_map()) {
    put_head(out, kMajorMap, v.as_map().size());
    for (const auto& [key, val] : v.as_map()) {
      if (!valid_utf8(key)) {
        throw CborError(CborErrorKind::Unencodable, "map key is not valid UTF-8");
      }
      put_head(out, kMajorText, key.size());
      append(out, BytesView(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()));
      encode_into(out, val);
    }
  } else {
    encode_link(out, v.as_link());
  }
}

class Parser {
 public:
  explicit Parser(BytesView data) : data_(data) {}

  Value parse_document() {
    Value v = parse_value(0);
    if (pos_ != data_.size()) {
      throw CborError(CborErrorKind::Malformed, "trailing bytes after value");
    }
    return v;
  }

 private:
  [[noreturn]] void fail(CborErrorKind kind, const char* what) {
    throw CborError(kind, what);
  }

  std::uint8_t next_byte() {
    if (pos_ >= data_.size()) fail(CborErrorKind::Malformed, "truncated input");
    return data_[pos_++];
  }

  // Reads a head, enforcing minimal-length argument encoding.
  std::pair<std::uint8_t, std::uint64_t> read_head() {
    std::uint8_t b = next_byte();
    std::uint8_t major = b >> 5;
    std::uint8_t info = b & 0x1f;
    if (info < 24) return {major, info};
    if (info == 31) fail(CborErrorKind::UnsupportedConstruct, "indefinite length");
    if (info > 27) fail(CborErrorKind::Malformed, "reserved additional info");
    int len = 1 << (info - 24);
    std::uint64_t arg = 0;
    for (int i = 0; i < len; ++i) arg = (arg << 8) | next_byte();
    bool minimal = (info == 24 && arg >= 24) || (info == 25 && arg > 0xff) ||
                   (info == 26 && arg > 0xffff) || (info == 27 && arg > 0xffffffffull);
    if (!minimal) fail(CborErrorKind::NonCanonical, "non-minimal length encoding");
    return {major, arg};
  }

  BytesView read_payload(std::uint64_t n) {
    if (n > data_.size() - pos_) fail(CborErrorKind::Malformed, "truncated payload");
    BytesView out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::string read_text(std::uint64_t n) {
    BytesView raw = read_payload(n);
    std::string s(raw.begin(), raw.end());
    if (!valid_utf8(s)) fail(CborErrorKind::Malformed, "invalid UTF-8 in text");
    return s;
  }

  Value parse_value(int depth) {
    if (depth > 128) fail(CborErrorKind::Malformed, "nesting too deep");
    auto [major, arg] = read_head();
    switch (major) {
      case kMajorUint:
        if (arg > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          fail(CborErrorKind::UnsupportedConstruct, "integer exceeds signed 64-bit range");
        }
        return Value(static_cast<std::int64_t>(arg));
      case kMajorNegInt:
        if (arg > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          fail(CborErrorKind::UnsupportedConstruct, "integer exceeds signed 64-bit range");
        }
        return Value(-1 - static_cast<std::int64_t>(arg));
      case kMajorBytes: {
        BytesView raw = read_payload(arg);
        return Value(Bytes(raw.begin(), raw.end()));
      }
      case kMajorText:
        return Value(read_text(arg));
      case kMajorArray: {
        Value::Array items;
        items.reserve(arg < 4096 ? arg : 4096);
        for (std::uint64_t i = 0; i < arg; ++i) items.push_back(parse_value(depth + 1));
        return Value(std::move(items));
      }
      case kMajorMap: {
        Value::Map map;
        std::string prev_key;
        KeyOrder less;
        for (std::uint64_t i = 0; i < arg; ++i) {
          auto [kmajor, karg] = read_head();
          if (kmajor != kMajorText) {
            fail(CborErrorKind::UnsupportedConstruct, "non-text map key");
          }
          std::string key = read_text(karg);
          if (i > 0 && !less(prev_key, key)) {
            fail(CborErrorKind::NonCanonical, "map keys not in canonical order");
          }
          Value val = parse_value(depth + 1);
          map.emplace(key, std::move(val));
          prev_key = std::move(key);
        }
        return Value(std::move(map));
      }
      case kMajorTag: {
        if (arg != kCidTag) fail(CborErrorKind::UnsupportedConstruct, "unsupported tag");
        auto [cmajor, carg] = read_head();
        if (cmajor != kMajorBytes) fail(CborErrorKind::Malformed, "tag 42 content must be bytes");
        BytesView raw = read_payload(carg);
        if (raw.empty() || raw[0] != 0x00) {
          fail(CborErrorKind::Malformed, "CID bytes missing identity multibase prefix");
        }
        auto cid = Cid::from_bytes(raw.subspan(1));
        if (!cid) fail(CborErrorKind::Malformed, "malformed CID bytes");
        return Value(CidLink{*cid});
      }
      default: {  // kMajorSimple
        if (arg == 20) return Value(false);
        if (arg == 21) return Value(true);
        if (arg == 22) return Value(nullptr);
        if (arg == 25 || arg == 26 || arg == 27) {
          fail(CborErrorKind::UnsupportedConstruct, "floating point not in profile");
        }
        fail(CborErrorKind::UnsupportedConstruct, "unsupported simple value");
      }
    }
  }

  BytesView data_;
  size_t pos_ = 0;
};

}  // namespace

bool valid_utf8(std::string_view s) {
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (size_t j = 1; j <= extra; ++j) {
      unsigned char cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // overlong, surrogate, and out-of-range checks
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
        (extra == 3 && cp < 0x10000) || cp > 0x10ffff ||
        (cp >= 0xd800 && cp <= 0xdfff)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

Bytes encode(const Value& value) {
  Bytes out;
  encode_into(out, value);
  return out;
}

Value decode(BytesView data) {
  return Parser(data).parse_document();
}

}  // namespace atproto::codec
