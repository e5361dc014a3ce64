#pragma once

#include <map>
#include <set>
#include <string>

namespace atproto {

// Per-query moderation context. Mutes and label preferences are private,
// PDS-held state; the app view receives them per query and never stores
// them.
struct ViewerContext {
  std::string did;  // empty for logged-out reads
  std::set<std::string> muted_actors;   // DIDs
  std::set<std::string> muted_threads;  // thread-root at-URIs
  // label value -> show | warn | hide (unlisted values default to show)
  std::map<std::string, std::string> label_prefs;
  std::set<std::string> labeler_dids;  // labelers this viewer subscribes to
};

}  // namespace atproto
