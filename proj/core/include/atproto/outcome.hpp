#pragma once

#include <optional>
#include <string>
#include <utility>

namespace atproto {

// Service-level result carrying either a value or a stable error code
// ("handle-taken", "bad-credentials", ...). Errors here are data, not
// exceptions: callers branch on them and HTTP surfaces map them to
// responses.
template <typename T>
class Outcome {
 public:
  static Outcome success(T value) {
    Outcome o;
    o.value_ = std::move(value);
    return o;
  }
  static Outcome failure(std::string code, std::string detail = "") {
    Outcome o;
    o.code_ = std::move(code);
    o.detail_ = std::move(detail);
    return o;
  }

  bool ok() const { return value_.has_value(); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return *value_; }
  T& value() { return *value_; }
  const std::string& error() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  std::optional<T> value_;
  std::string code_;
  std::string detail_;
};

struct Unit {};

inline Outcome<Unit> ok_unit() { return Outcome<Unit>::success(Unit{}); }

}  // namespace atproto
