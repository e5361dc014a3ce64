#include "atproto/consistency.hpp"

#include <algorithm>
#include <sstream>

#include "atproto/repo.hpp"

namespace atproto::audit {

using codec::Value;

namespace {

std::string author_of(const std::string& uri) {
  auto parsed = lexicon::AtUri::parse(uri);
  return parsed ? parsed->did : "";
}

std::optional<std::string> ref_uri(const Value& record, const char* field) {
  const Value* ref = record.at(field);
  if (!ref || !ref->is_map()) return std::nullopt;
  const Value* uri = ref->at("uri");
  if (!uri || !uri->is_string()) return std::nullopt;
  return uri->as_string();
}

}  // namespace

ReferenceViews::ReferenceViews(const std::vector<Bytes>& archives,
                               std::set<std::string> takedowns,
                               const std::vector<labels::Label>& label_stream)
    : takedowns_(std::move(takedowns)) {
  for (const Bytes& archive : archives) {
    repo::MemoryBlockStore store;
    repo::ImportResult imported = repo::import_archive(archive, store);
    const std::string& did = imported.commit.did;
    dids_.insert(did);
    for (const auto& [path, cid] : repo::enumerate(store, imported.commit.data)) {
      auto parsed = repo::RecordPath::parse(path);
      if (!parsed) continue;
      Value record = codec::decode(*store.get(cid));
      std::string uri = "at://" + did + "/" + path;
      const std::string& col = parsed->collection;
      if (col == lexicon::kPost) {
        Post post;
        post.uri = uri;
        post.author = did;
        const Value* text = record.at("text");
        const Value* created = record.at("createdAt");
        if (!text || !text->is_string() || !created || !created->is_int()) continue;
        post.created_at = created->as_int();
        if (const Value* reply = record.at("reply")) {
          auto root = ref_uri(*reply, "root");
          auto parent = ref_uri(*reply, "parent");
          post.root = root ? *root : uri;
          post.parent = parent ? *parent : "";
        } else {
          post.root = uri;
        }
        if (const Value* mentions = record.at("mentions")) {
          if (mentions->is_array()) {
            for (const Value& m : mentions->as_array()) {
              if (m.is_string()) post.mentions.push_back(m.as_string());
            }
          }
        }
        if (!post.parent.empty()) children_[post.parent].push_back(uri);
        posts_[uri] = std::move(post);
      } else if (col == lexicon::kLike) {
        if (auto subject = ref_uri(record, "subject")) likes_[*subject].push_back(uri);
      } else if (col == lexicon::kRepost) {
        auto subject = ref_uri(record, "subject");
        if (!subject) continue;
        reposts_[*subject].push_back(uri);
        const Value* created = record.at("createdAt");
        repost_info_[uri] = {*subject, created && created->is_int() ? created->as_int() : 0};
      } else if (col == lexicon::kFollow) {
        const Value* subject = record.at("subject");
        if (subject && subject->is_string()) follow_pairs_.insert({did, subject->as_string()});
      } else if (col == lexicon::kBlock) {
        const Value* subject = record.at("subject");
        if (subject && subject->is_string()) block_pairs_.insert({did, subject->as_string()});
      } else if (col == lexicon::kThreadgate) {
        auto subject = ref_uri(record, "post");
        const Value* allow = record.at("allow");
        if (!subject || !allow || !allow->is_array()) continue;
        std::vector<std::string> rules;
        for (const Value& rule : allow->as_array()) {
          if (rule.is_string()) rules.push_back(rule.as_string());
        }
        gates_[*subject] = std::move(rules);
      } else if (col == lexicon::kListItem) {
        const Value* subject = record.at("subject");
        const Value* list = record.at("list");
        if (subject && subject->is_string() && list && list->is_string()) {
          list_members_[{list->as_string(), subject->as_string()}] = true;
        }
      }
    }
  }
  for (const labels::Label& label : label_stream) {
    auto key = std::make_tuple(label.src, label.uri, label.val);
    if (label.neg) {
      labels_.erase(key);
    } else {
      labels_.insert(key);
    }
  }
  for (auto& [parent, kids] : children_) {
    (void)parent;
    std::sort(kids.begin(), kids.end());
  }
}

bool ReferenceViews::taken_down(const std::string& subject) const {
  return takedowns_.count(subject) > 0;
}

bool ReferenceViews::blocked_pair(const std::string& a, const std::string& b) const {
  if (a.empty() || b.empty() || a == b) return false;
  return block_pairs_.count({a, b}) > 0 || block_pairs_.count({b, a}) > 0;
}

bool ReferenceViews::label_hidden(const std::string& uri, const std::string& author,
                                  const ViewerContext& viewer) const {
  for (const auto& [src, target, val] : labels_) {
    if (target != uri && target != author) continue;
    if (!viewer.labeler_dids.count(src)) continue;
    auto pref = viewer.label_prefs.find(val);
    if (pref != viewer.label_prefs.end() && pref->second == "hide") return true;
  }
  return false;
}

bool ReferenceViews::post_visible(const Post& post, const ViewerContext& viewer) const {
  if (taken_down(post.uri) || taken_down(post.author)) return false;
  if (!viewer.did.empty() && blocked_pair(viewer.did, post.author)) return false;
  if (viewer.muted_actors.count(post.author)) return false;
  if (!post.root.empty() && viewer.muted_threads.count(post.root)) return false;
  if (label_hidden(post.uri, post.author, viewer)) return false;
  if (!post.parent.empty()) {
    auto parent = posts_.find(post.parent);
    if (parent != posts_.end() && blocked_pair(post.author, parent->second.author)) {
      return false;
    }
    if (post.root != post.uri) {
      auto root = posts_.find(post.root);
      if (root != posts_.end() && blocked_pair(post.author, root->second.author)) {
        return false;
      }
    }
  }
  return true;
}

bool ReferenceViews::visible(const std::string& uri, const ViewerContext& viewer) const {
  auto it = posts_.find(uri);
  if (it == posts_.end()) return false;
  return post_visible(it->second, viewer);
}

bool ReferenceViews::reply_allowed(const Post& reply, const Post& root) const {
  if (reply.author == root.author) return true;
  auto gate = gates_.find(root.uri);
  if (gate == gates_.end()) return true;
  for (const std::string& rule : gate->second) {
    if (rule == "anyone") return true;
    if (rule == "followed" && follow_pairs_.count({root.author, reply.author})) return true;
    if (rule == "mentioned") {
      for (const std::string& did : root.mentions) {
        if (did == reply.author) return true;
      }
    }
    if (rule.starts_with("list/") && list_members_.count({rule.substr(5), reply.author})) {
      return true;
    }
  }
  return false;
}

std::int64_t ReferenceViews::like_count(const std::string& uri) const {
  auto subject = posts_.find(uri);
  if (subject == posts_.end()) return 0;
  auto it = likes_.find(uri);
  if (it == likes_.end()) return 0;
  std::int64_t n = 0;
  for (const std::string& like_uri : it->second) {
    std::string liker = author_of(like_uri);
    if (blocked_pair(liker, subject->second.author)) continue;
    if (taken_down(liker) || taken_down(like_uri)) continue;
    ++n;
  }
  return n;
}

std::int64_t ReferenceViews::repost_count(const std::string& uri) const {
  auto subject = posts_.find(uri);
  if (subject == posts_.end()) return 0;
  auto it = reposts_.find(uri);
  if (it == reposts_.end()) return 0;
  std::int64_t n = 0;
  for (const std::string& repost_uri : it->second) {
    std::string reposter = author_of(repost_uri);
    if (blocked_pair(reposter, subject->second.author)) continue;
    if (taken_down(reposter) || taken_down(repost_uri)) continue;
    ++n;
  }
  return n;
}

std::int64_t ReferenceViews::reply_count(const std::string& uri) const {
  auto subject = posts_.find(uri);
  if (subject == posts_.end()) return 0;
  auto it = children_.find(uri);
  if (it == children_.end()) return 0;
  std::int64_t n = 0;
  for (const std::string& child : it->second) {
    auto reply = posts_.find(child);
    if (reply == posts_.end()) continue;
    if (taken_down(child) || taken_down(reply->second.author)) continue;
    if (blocked_pair(reply->second.author, subject->second.author)) continue;
    ++n;
  }
  return n;
}

std::set<std::string> ReferenceViews::followers(const std::string& did) const {
  std::set<std::string> out;
  for (const auto& [follower, followed] : follow_pairs_) {
    if (followed != did) continue;
    if (blocked_pair(follower, did)) continue;
    if (taken_down(follower)) continue;
    out.insert(follower);
  }
  return out;
}

std::set<std::string> ReferenceViews::follows(const std::string& did) const {
  std::set<std::string> out;
  for (const auto& [follower, followed] : follow_pairs_) {
    if (follower != did) continue;
    if (blocked_pair(did, followed)) continue;
    if (taken_down(followed)) continue;
    out.insert(followed);
  }
  return out;
}

std::vector<std::string> ReferenceViews::thread_preorder(const std::string& root_uri,
                                                         const ViewerContext& viewer) const {
  std::vector<std::string> out;
  auto root = posts_.find(root_uri);
  if (root == posts_.end()) return out;
  std::function<void(const std::string&)> walk = [&](const std::string& uri) {
    auto post = posts_.find(uri);
    if (post == posts_.end()) return;
    if (!post->second.parent.empty() && !reply_allowed(post->second, root->second)) return;
    if (!post_visible(post->second, viewer)) return;
    out.push_back(uri);
    auto kids = children_.find(uri);
    if (kids == children_.end()) return;
    std::vector<std::string> ordered = kids->second;
    std::sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
      auto pa = posts_.find(a);
      auto pb = posts_.find(b);
      std::int64_t ta = pa != posts_.end() ? pa->second.created_at : 0;
      std::int64_t tb = pb != posts_.end() ? pb->second.created_at : 0;
      if (ta != tb) return ta < tb;
      return a < b;
    });
    for (const std::string& child : ordered) walk(child);
  };
  walk(root_uri);
  return out;
}

std::vector<std::string> ReferenceViews::timeline(const std::string& viewer_did,
                                                  const ViewerContext& viewer) const {
  struct Candidate {
    std::int64_t sort_at;
    std::string item_uri;
    std::string post_uri;
    std::string reposted_by;  // empty for original posts
  };
  std::vector<Candidate> candidates;
  for (const auto& [follower, followed] : follow_pairs_) {
    if (follower != viewer_did) continue;
    for (const auto& [uri, post] : posts_) {
      if (post.author == followed) {
        candidates.push_back({post.created_at, uri, uri, ""});
      }
    }
    for (const auto& [repost_uri, info] : repost_info_) {
      if (author_of(repost_uri) == followed) {
        candidates.push_back({info.second, repost_uri, info.first, followed});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.sort_at != b.sort_at) return a.sort_at > b.sort_at;
    return a.item_uri < b.item_uri;
  });
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const Candidate& c : candidates) {
    if (seen.count(c.post_uri)) continue;
    auto post = posts_.find(c.post_uri);
    if (post == posts_.end()) continue;
    if (!post_visible(post->second, viewer)) continue;
    if (!c.reposted_by.empty()) {
      if (taken_down(c.item_uri) || taken_down(c.reposted_by)) continue;
      if (blocked_pair(c.reposted_by, post->second.author)) continue;
      if (!viewer.did.empty() && blocked_pair(viewer.did, c.reposted_by)) continue;
      if (viewer.muted_actors.count(c.reposted_by)) continue;
    }
    seen.insert(c.post_uri);
    out.push_back(c.item_uri);
  }
  return out;
}

std::vector<std::string> ReferenceViews::post_uris() const {
  std::vector<std::string> out;
  for (const auto& [uri, post] : posts_) {
    (void)post;
    out.push_back(uri);
  }
  return out;
}

std::vector<std::string> ReferenceViews::root_post_uris() const {
  std::vector<std::string> out;
  for (const auto& [uri, post] : posts_) {
    if (post.parent.empty()) out.push_back(uri);
  }
  return out;
}

std::set<std::string> ReferenceViews::dids() const {
  return dids_;
}

namespace {

void flatten_thread(const appview::ThreadNode& node, std::vector<std::string>& out) {
  out.push_back(node.post.uri);
  for (const appview::ThreadNode& child : node.replies) flatten_thread(child, out);
}

template <typename A, typename B>
void expect_eq(const A& got, const B& want, const std::string& what, AuditReport& report) {
  if (!(got == want)) {
    report.ok = false;
    std::ostringstream os;
    os << what << ": appview/reference disagree";
    report.mismatches.push_back(os.str());
  }
}

}  // namespace

AuditReport audit_appview(const appview::AppView& view, const ReferenceViews& reference,
                          const std::map<std::string, ViewerContext>& viewers) {
  AuditReport report;
  ViewerContext nobody;

  for (const std::string& uri : reference.post_uris()) {
    auto got = view.get_post(uri, nobody);
    bool want_visible = reference.visible(uri, nobody);
    if (got.ok() != want_visible) {
      report.ok = false;
      report.mismatches.push_back("visibility of " + uri);
      continue;
    }
    if (!got.ok()) continue;
    expect_eq(got.value().like_count, reference.like_count(uri), "like count of " + uri,
              report);
    expect_eq(got.value().repost_count, reference.repost_count(uri),
              "repost count of " + uri, report);
    expect_eq(got.value().reply_count, reference.reply_count(uri), "reply count of " + uri,
              report);
  }

  for (const std::string& did : reference.dids()) {
    auto got = view.get_followers(did);
    std::set<std::string> got_set;
    if (got.ok()) got_set.insert(got.value().begin(), got.value().end());
    expect_eq(got_set, reference.followers(did), "followers of " + did, report);
    auto got_follows = view.get_follows(did);
    std::set<std::string> follows_set;
    if (got_follows.ok()) follows_set.insert(got_follows.value().begin(),
                                             got_follows.value().end());
    expect_eq(follows_set, reference.follows(did), "follows of " + did, report);
  }

  auto compare_views = [&](const std::string& who, const ViewerContext& ctx) {
    for (const std::string& root : reference.root_post_uris()) {
      std::vector<std::string> want = reference.thread_preorder(root, ctx);
      std::vector<std::string> got;
      auto thread = view.get_thread(root, ctx);
      if (thread.ok()) flatten_thread(thread.value(), got);
      expect_eq(got, want, "thread " + root + " for " + who, report);
    }
  };
  compare_views("anonymous", nobody);

  for (const auto& [did, ctx] : viewers) {
    compare_views(did, ctx);
    std::vector<std::string> want = reference.timeline(did, ctx);
    std::vector<std::string> got;
    std::optional<std::string> cursor;
    for (int page = 0; page < 1000; ++page) {
      auto result = view.get_timeline(did, ctx, cursor, 10);
      if (!result.ok()) break;
      for (const appview::TimelineItem& item : result.value().items) {
        got.push_back(item.item_uri);
      }
      if (!result.value().cursor) break;
      cursor = result.value().cursor;
    }
    expect_eq(got, want, "timeline of " + did, report);
  }
  return report;
}

}  // namespace atproto::audit
