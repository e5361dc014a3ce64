#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atproto/cbor.hpp"

namespace atproto::lexicon {

// at://<did>/<collection>/<rkey>
struct AtUri {
  std::string did;
  std::string collection;
  std::string rkey;

  std::string str() const { return "at://" + did + "/" + collection + "/" + rkey; }
  static std::optional<AtUri> parse(std::string_view uri);

  auto operator<=>(const AtUri&) const = default;
};

// Cross-repository record reference: at-URI plus the referenced record's CID.
struct StrongRef {
  std::string uri;
  codec::Cid cid;
};

std::optional<StrongRef> strong_ref_from(const codec::Value& v);
codec::Value strong_ref_value(const StrongRef& ref);

struct Violation {
  std::string code;    // e.g. text-too-long, missing-cid
  std::string detail;
};

struct ValidationResult {
  bool ok = true;
  bool unknown_lexicon = false;  // unknown collections pass with this note
  std::vector<Violation> violations;
};

// Pure, total validation against the compiled-in schema registry.
ValidationResult validate_record(const std::string& collection, const codec::Value& record);

bool known_collection(const std::string& collection);

// Registered collection names.
inline constexpr const char* kPost = "app.bsky.feed.post";
inline constexpr const char* kLike = "app.bsky.feed.like";
inline constexpr const char* kRepost = "app.bsky.feed.repost";
inline constexpr const char* kThreadgate = "app.bsky.feed.threadgate";
inline constexpr const char* kGenerator = "app.bsky.feed.generator";
inline constexpr const char* kFollow = "app.bsky.graph.follow";
inline constexpr const char* kBlock = "app.bsky.graph.block";
inline constexpr const char* kList = "app.bsky.graph.list";
inline constexpr const char* kListItem = "app.bsky.graph.listitem";
inline constexpr const char* kProfile = "app.bsky.actor.profile";
inline constexpr const char* kLabelerService = "app.bsky.labeler.service";

inline constexpr size_t kMaxPostChars = 300;   // unicode code points
inline constexpr size_t kMaxPostImages = 4;

// Unicode code-point count (grapheme-agnostic).
size_t count_codepoints(std::string_view text);

}  // namespace atproto::lexicon
