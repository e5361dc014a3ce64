#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "atproto/appview.hpp"
#include "atproto/labels.hpp"
#include "atproto/viewer.hpp"

namespace atproto::audit {

// Batch recomputation of every queryable aggregate directly from exported
// repository archives. Indexes are derived state; this recomputes them from
// the source of truth and never touches the app view's incremental path, so
// agreement between the two is a meaningful consistency check.
class ReferenceViews {
 public:
  ReferenceViews(const std::vector<Bytes>& archives, std::set<std::string> takedowns,
                 const std::vector<labels::Label>& label_stream);

  std::int64_t like_count(const std::string& uri) const;
  std::int64_t repost_count(const std::string& uri) const;
  std::int64_t reply_count(const std::string& uri) const;
  std::set<std::string> followers(const std::string& did) const;
  std::set<std::string> follows(const std::string& did) const;

  // Preorder flatten of the reply tree, children ordered by (createdAt, uri).
  std::vector<std::string> thread_preorder(const std::string& root_uri,
                                           const ViewerContext& viewer) const;
  // Timeline item URIs (repost uri for reposted entries), newest first.
  std::vector<std::string> timeline(const std::string& viewer_did,
                                    const ViewerContext& viewer) const;

  std::vector<std::string> post_uris() const;
  std::vector<std::string> root_post_uris() const;
  std::set<std::string> dids() const;
  bool visible(const std::string& uri, const ViewerContext& viewer) const;

 private:
  struct Post {
    std::string uri;
    std::string author;
    std::string root;
    std::string parent;  // empty for top-level posts
    std::int64_t created_at = 0;
    std::vector<std::string> mentions;
  };

  bool taken_down(const std::string& subject) const;
  bool blocked_pair(const std::string& a, const std::string& b) const;
  bool label_hidden(const std::string& uri, const std::string& author,
                    const ViewerContext& viewer) const;
  bool post_visible(const Post& post, const ViewerContext& viewer) const;
  bool reply_allowed(const Post& reply, const Post& root) const;

  std::map<std::string, Post> posts_;
  std::map<std::string, std::vector<std::string>> children_;  // parent -> replies
  std::map<std::string, std::vector<std::string>> likes_;     // post -> like uris
  std::map<std::string, std::vector<std::string>> reposts_;   // post -> repost uris
  std::map<std::string, std::pair<std::string, std::int64_t>> repost_info_;
  std::set<std::pair<std::string, std::string>> follow_pairs_;
  std::set<std::pair<std::string, std::string>> block_pairs_;
  std::map<std::string, std::vector<std::string>> gates_;     // root uri -> allow rules
  std::map<std::pair<std::string, std::string>, bool> list_members_;
  std::set<std::string> takedowns_;
  std::set<std::tuple<std::string, std::string, std::string>> labels_;
  std::set<std::string> dids_;
};

struct AuditReport {
  bool ok = true;
  std::vector<std::string> mismatches;
};

// Compares every aggregate the app view serves against the reference.
// `viewers` supplies per-DID moderation contexts for timeline and thread
// comparison.
AuditReport audit_appview(const appview::AppView& view, const ReferenceViews& reference,
                          const std::map<std::string, ViewerContext>& viewers);

}  // namespace atproto::audit
