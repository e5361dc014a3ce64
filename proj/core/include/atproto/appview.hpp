#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "atproto/clock.hpp"
#include "atproto/identity.hpp"
#include "atproto/labels.hpp"
#include "atproto/lexicon.hpp"
#include "atproto/outcome.hpp"
#include "atproto/relay.hpp"
#include "atproto/viewer.hpp"

namespace atproto::appview {

struct PostView {
  std::string uri;
  codec::Cid cid;
  std::string author;         // did
  std::string author_handle;  // "handle.invalid" sentinel when broken
  std::string text;
  std::int64_t created_at = 0;
  std::int64_t like_count = 0;
  std::int64_t repost_count = 0;
  std::int64_t reply_count = 0;
  std::vector<codec::Cid> images;
  // labels visible to this viewer: (labeler did, value)
  std::vector<std::pair<std::string, std::string>> labels;
  bool warn = false;  // a subscribed labeler's value is set to "warn"
};

struct ThreadNode {
  PostView post;
  std::vector<ThreadNode> replies;
};

struct TimelineItem {
  PostView post;
  std::optional<std::string> reposted_by;  // did of the reposter
  std::int64_t sort_at = 0;
  std::string item_uri;  // repost uri when reposted, else post uri
};

struct TimelinePage {
  std::vector<TimelineItem> items;
  std::optional<std::string> cursor;
};

struct ProfileView {
  std::string did;
  std::string handle;
  std::string display_name;
  std::string description;
  std::int64_t followers_count = 0;
  std::int64_t follows_count = 0;
  std::int64_t posts_count = 0;
  std::string handle_state;  // verified | invalid | unchecked
};

struct FeedPage {
  std::vector<PostView> posts;
  std::optional<std::string> cursor;
  bool generator_unavailable = false;  // empty-page fallback marker
};

// Skeleton transport to a feed generator.
struct SkeletonPage {
  std::vector<std::string> post_uris;
  std::optional<std::string> cursor;
};
using SkeletonFetcher = std::function<Outcome<SkeletonPage>(
    const std::string& feed_uri, const std::optional<std::string>& cursor, size_t limit,
    const std::string& viewer)>;

// Blob hydration from the origin PDS, cached by CID.
using BlobFetcher =
    std::function<std::optional<Bytes>(const std::string& did, const codec::Cid& cid)>;

struct AppViewConfig {
  std::string operator_token = "operator";
  std::int64_t handle_recheck_micros = 24ll * 3600 * 1'000'000;
};

// Consumes the firehose and materializes application state: counts, threads,
// follower sets, timelines. Counts reflect live records only; blocks, mutes,
// labels, and takedowns are enforced at read time so reversals restore
// visibility.
class AppView {
 public:
  AppView(AppViewConfig config, Clock& clock, identity::Network& net,
          identity::DirectoryClient& directory);

  // --- ingestion ---
  void ingest_event(const relay::FirehoseEvent& event);
  // Pulls everything available from a relay subscription.
  size_t pump(events::Subscription<relay::FirehoseEvent>& sub);

  Outcome<Unit> ingest_label(const labels::Label& label);
  size_t pump_labels(events::Subscription<labels::Label>& sub);

  // --- queries ---
  Outcome<PostView> get_post(const std::string& uri, const ViewerContext& viewer) const;
  Outcome<ThreadNode> get_thread(const std::string& uri, const ViewerContext& viewer) const;
  Outcome<TimelinePage> get_timeline(const std::string& viewer_did,
                                     const ViewerContext& viewer,
                                     const std::optional<std::string>& cursor,
                                     size_t limit) const;
  Outcome<ProfileView> get_profile(const std::string& did) const;
  Outcome<std::vector<std::string>> get_followers(const std::string& did) const;
  Outcome<std::vector<std::string>> get_follows(const std::string& did) const;
  Outcome<std::vector<std::string>> get_likes(const std::string& uri) const;
  Outcome<FeedPage> get_feed(const std::string& feed_uri, const ViewerContext& viewer,
                             const std::optional<std::string>& cursor, size_t limit) const;

  Outcome<std::optional<Bytes>> get_blob(const std::string& did, const codec::Cid& cid);

  // --- moderation / operations ---
  Outcome<Unit> admin_takedown(const std::string& operator_token, const std::string& subject,
                               bool on);
  std::vector<identity::HandleStatus> check_handles();
  void on_tick();  // runs scheduled work (periodic handle re-verification)

  void set_skeleton_fetcher(SkeletonFetcher f) { skeleton_ = std::move(f); }
  void set_blob_fetcher(BlobFetcher f) { blob_fetcher_ = std::move(f); }

  identity::HandleStatus handle_status(const std::string& did) const;
  std::uint64_t events_applied() const { return events_applied_; }
  std::uint64_t malformed_records() const { return malformed_records_; }

  // Raw index accessors used by consistency audits.
  std::map<std::string, std::set<std::string>> follower_sets() const;
  std::vector<std::string> known_dids() const;

 private:
  struct PostRecord {
    std::string uri;
    codec::Cid cid;
    std::string author;
    std::string text;
    std::int64_t created_at = 0;
    std::optional<std::string> root_uri;    // thread root (self for top posts)
    std::optional<std::string> parent_uri;  // reply parent
    std::vector<std::string> mentions;
    std::vector<codec::Cid> images;
  };

  struct Threadgate {
    std::vector<std::string> allow;  // anyone | followed | mentioned | list/<uri>
  };

  void apply_op(const std::string& did, const codec::Cid& commit,
                const repo::RecordOp& op, const std::map<codec::Cid, Bytes>& blocks);
  void index_record(const std::string& uri, const codec::Value& record,
                    const codec::Cid& cid);
  void unindex_record(const std::string& uri);
  void note_identity(const std::string& did);

  bool taken_down(const std::string& uri_or_did) const;
  bool blocked_pair(const std::string& a, const std::string& b) const;
  bool reply_allowed(const PostRecord& reply, const PostRecord& root) const;
  // label decision for a viewer: "" (show), "warn", or "hide"
  std::string label_decision(const std::string& uri, const std::string& author,
                             const ViewerContext& viewer,
                             std::vector<std::pair<std::string, std::string>>* out) const;
  std::optional<PostView> hydrate(const std::string& uri, const ViewerContext& viewer) const;
  bool post_visible(const PostRecord& post, const ViewerContext& viewer,
                    bool apply_mutes = true) const;
  std::int64_t visible_like_count(const std::string& uri) const;
  std::int64_t visible_repost_count(const std::string& uri) const;
  std::int64_t visible_reply_count(const std::string& uri) const;
  const PostRecord* post(const std::string& uri) const;

  AppViewConfig cfg_;
  Clock* clock_;
  identity::Network* net_;
  identity::DirectoryClient* directory_;
  SkeletonFetcher skeleton_;
  BlobFetcher blob_fetcher_;

  // record store: uri -> decoded record (needed to reverse deletes)
  std::map<std::string, std::pair<codec::Value, codec::Cid>> records_;

  std::map<std::string, PostRecord> posts_;                   // by uri
  std::map<std::string, std::set<std::string>> author_posts_;  // did -> post uris
  std::map<std::string, std::vector<std::string>> replies_;    // parent uri -> children
  std::map<std::string, std::set<std::string>> likes_;         // post uri -> like uris
  std::map<std::string, std::set<std::string>> reposts_;       // post uri -> repost uris
  std::map<std::string, std::set<std::string>> author_reposts_;  // did -> repost uris
  std::map<std::string, std::int64_t> repost_created_;           // repost uri -> timestamp
  // edge multiplicity: several live records may assert the same edge
  std::map<std::pair<std::string, std::string>, int> follow_edges_;
  std::map<std::pair<std::string, std::string>, int> block_edges_;
  std::map<std::pair<std::string, std::string>, int> list_member_counts_;
  std::map<std::string, Threadgate> threadgates_;  // root post uri -> gate
  std::map<std::string, std::pair<std::string, std::string>> profiles_;  // did -> (name, desc)

  std::set<std::string> takedowns_;  // uris and dids
  // (labeler, subject uri, value) -> label; negation erases
  std::map<std::tuple<std::string, std::string, std::string>, labels::Label> labels_;

  std::map<std::string, identity::HandleStatus> handle_status_;  // by did
  std::set<std::string> known_dids_;
  std::set<std::pair<std::string, codec::Cid>> applied_;  // (did, commit) idempotence
  std::map<codec::Cid, Bytes> blob_cache_;

  std::int64_t next_handle_check_ = 0;
  std::uint64_t events_applied_ = 0;
  std::uint64_t malformed_records_ = 0;
};

}  // namespace atproto::appview
