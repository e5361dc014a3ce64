#include "atproto/appview.hpp"

#include <algorithm>

namespace atproto::appview {

using codec::Cid;
using codec::Value;
using relay::FirehoseEvent;

namespace {

std::string uri_author(const std::string& uri) {
  // at://<did>/<collection>/<rkey>
  auto parsed = lexicon::AtUri::parse(uri);
  return parsed ? parsed->did : "";
}

std::string uri_collection(const std::string& uri) {
  auto parsed = lexicon::AtUri::parse(uri);
  return parsed ? parsed->collection : "";
}

std::optional<std::string> ref_uri(const Value& record, const char* field) {
  const Value* ref = record.at(field);
  if (!ref || !ref->is_map()) return std::nullopt;
  const Value* uri = ref->at("uri");
  if (!uri || !uri->is_string()) return std::nullopt;
  return uri->as_string();
}

}  // namespace

AppView::AppView(AppViewConfig config, Clock& clock, identity::Network& net,
                 identity::DirectoryClient& directory)
    : cfg_(std::move(config)), clock_(&clock), net_(&net), directory_(&directory) {
  next_handle_check_ = clock_->now_micros() + cfg_.handle_recheck_micros;
}

void AppView::note_identity(const std::string& did) {
  if (known_dids_.insert(did).second) {
    identity::HandleStatus status;
    status.did = did;
    status.state = identity::HandleStatus::State::Unchecked;
    auto parsed = identity::Did::parse(did);
    if (parsed) {
      identity::ResolverEnv env{*net_, *directory_, *clock_};
      auto resolved = identity::resolve_did(*parsed, env);
      if (resolved.ok()) status.handle = resolved.document->handle;
    }
    handle_status_[did] = std::move(status);
  }
}

void AppView::ingest_event(const FirehoseEvent& event) {
  if (!event.verified) return;  // relay contract: only verified events arrive
  if (!applied_.insert({event.origin.did, event.origin.commit}).second) {
    return;  // replayed duplicate
  }
  note_identity(event.origin.did);
  for (const repo::RecordOp& op : event.origin.ops) {
    apply_op(event.origin.did, event.origin.commit, op, event.origin.blocks);
  }
  ++events_applied_;
}

size_t AppView::pump(events::Subscription<FirehoseEvent>& sub) {
  size_t n = 0;
  while (true) {
    auto pull = sub.pull();
    if (pull.events.empty()) return n;
    for (const FirehoseEvent& event : pull.events) ingest_event(event);
    n += pull.events.size();
  }
}

void AppView::apply_op(const std::string& did, const Cid& commit, const repo::RecordOp& op,
                       const std::map<Cid, Bytes>& blocks) {
  (void)commit;
  std::string uri = "at://" + did + "/" + op.path;
  if (op.action == repo::RecordOp::Action::Delete) {
    unindex_record(uri);
    return;
  }
  if (!op.record) return;
  auto block = blocks.find(*op.record);
  if (block == blocks.end()) {
    ++malformed_records_;
    return;
  }
  Value record;
  try {
    record = codec::decode(block->second);
  } catch (const codec::CborError&) {
    ++malformed_records_;
    return;
  }
  if (op.action == repo::RecordOp::Action::Update) unindex_record(uri);
  index_record(uri, record, *op.record);
}

void AppView::index_record(const std::string& uri, const Value& record, const Cid& cid) {
  std::string collection = uri_collection(uri);
  std::string author = uri_author(uri);
  if (collection.empty() || author.empty()) {
    ++malformed_records_;
    return;
  }
  if (lexicon::known_collection(collection)) {
    auto validation = lexicon::validate_record(collection, record);
    if (!validation.ok) {
      ++malformed_records_;
      return;
    }
  } else {
    return;  // unknown lexicons flow through the firehose but are not indexed
  }
  records_[uri] = {record, cid};

  if (collection == lexicon::kPost) {
    PostRecord post;
    post.uri = uri;
    post.cid = cid;
    post.author = author;
    post.text = record.at("text")->as_string();
    post.created_at = record.at("createdAt")->as_int();
    if (const Value* reply = record.at("reply")) {
      post.root_uri = ref_uri(*reply, "root");
      post.parent_uri = ref_uri(*reply, "parent");
    }
    if (!post.root_uri) post.root_uri = uri;
    if (const Value* mentions = record.at("mentions")) {
      for (const Value& m : mentions->as_array()) post.mentions.push_back(m.as_string());
    }
    if (const Value* embed = record.at("embed")) {
      if (const Value* images = embed->at("images")) {
        for (const Value& img : images->as_array()) post.images.push_back(img.as_link());
      }
    }
    if (post.parent_uri) replies_[*post.parent_uri].push_back(uri);
    author_posts_[author].insert(uri);
    posts_[uri] = std::move(post);
  } else if (collection == lexicon::kLike) {
    std::string subject = ref_uri(record, "subject") ? *ref_uri(record, "subject") : "";
    if (subject.empty()) return;
    likes_[subject].insert(uri);
  } else if (collection == lexicon::kRepost) {
    std::string subject = ref_uri(record, "subject") ? *ref_uri(record, "subject") : "";
    if (subject.empty()) return;
    reposts_[subject].insert(uri);
    author_reposts_[author].insert(uri);
    const Value* created = record.at("createdAt");
    repost_created_[uri] = created && created->is_int() ? created->as_int() : 0;
  } else if (collection == lexicon::kFollow) {
    ++follow_edges_[{author, record.at("subject")->as_string()}];
  } else if (collection == lexicon::kBlock) {
    ++block_edges_[{author, record.at("subject")->as_string()}];
  } else if (collection == lexicon::kThreadgate) {
    auto subject = ref_uri(record, "post");
    if (!subject) return;
    Threadgate gate;
    for (const Value& rule : record.at("allow")->as_array()) {
      gate.allow.push_back(rule.as_string());
    }
    threadgates_[*subject] = std::move(gate);
  } else if (collection == lexicon::kListItem) {
    ++list_member_counts_[{record.at("list")->as_string(),
                           record.at("subject")->as_string()}];
  } else if (collection == lexicon::kProfile) {
    const Value* name = record.at("displayName");
    const Value* desc = record.at("description");
    profiles_[author] = {name && name->is_string() ? name->as_string() : "",
                         desc && desc->is_string() ? desc->as_string() : ""};
  }
  // kList, kGenerator, kLabelerService records carry no index effects here
}

void AppView::unindex_record(const std::string& uri) {
  auto stored = records_.find(uri);
  if (stored == records_.end()) return;
  const Value& record = stored->second.first;
  std::string collection = uri_collection(uri);
  std::string author = uri_author(uri);

  if (collection == lexicon::kPost) {
    auto post = posts_.find(uri);
    if (post != posts_.end()) {
      if (post->second.parent_uri) {
        auto& siblings = replies_[*post->second.parent_uri];
        siblings.erase(std::remove(siblings.begin(), siblings.end(), uri), siblings.end());
      }
      author_posts_[author].erase(uri);
      posts_.erase(post);
    }
  } else if (collection == lexicon::kLike) {
    if (auto subject = ref_uri(record, "subject")) likes_[*subject].erase(uri);
  } else if (collection == lexicon::kRepost) {
    if (auto subject = ref_uri(record, "subject")) reposts_[*subject].erase(uri);
    author_reposts_[author].erase(uri);
    repost_created_.erase(uri);
  } else if (collection == lexicon::kFollow) {
    auto it = follow_edges_.find({author, record.at("subject")->as_string()});
    if (it != follow_edges_.end() && --it->second <= 0) follow_edges_.erase(it);
  } else if (collection == lexicon::kBlock) {
    auto it = block_edges_.find({author, record.at("subject")->as_string()});
    if (it != block_edges_.end() && --it->second <= 0) block_edges_.erase(it);
  } else if (collection == lexicon::kThreadgate) {
    if (auto subject = ref_uri(record, "post")) threadgates_.erase(*subject);
  } else if (collection == lexicon::kListItem) {
    auto it = list_member_counts_.find(
        {record.at("list")->as_string(), record.at("subject")->as_string()});
    if (it != list_member_counts_.end() && --it->second <= 0) list_member_counts_.erase(it);
  } else if (collection == lexicon::kProfile) {
    profiles_.erase(author);
  }
  records_.erase(stored);
}

Outcome<Unit> AppView::ingest_label(const labels::Label& label) {
  auto parsed = identity::Did::parse(label.src);
  if (!parsed) return Outcome<Unit>::failure("bad-label-signature", "src is not a did");
  identity::ResolverEnv env{*net_, *directory_, *clock_};
  auto resolved = identity::resolve_did(*parsed, env);
  if (!resolved.ok()) return Outcome<Unit>::failure("bad-label-signature", "unresolvable src");
  auto key = crypto::decode_public_key(resolved.document->signing_key);
  if (!key || !label.verify(*key)) {
    return Outcome<Unit>::failure("bad-label-signature", label.uri);
  }
  auto id = std::make_tuple(label.src, label.uri, label.val);
  if (label.neg) {
    labels_.erase(id);
  } else {
    labels_[id] = label;
  }
  return ok_unit();
}

size_t AppView::pump_labels(events::Subscription<labels::Label>& sub) {
  size_t n = 0;
  while (true) {
    auto pull = sub.pull();
    if (pull.events.empty()) return n;
    for (const labels::Label& label : pull.events) ingest_label(label);
    n += pull.events.size();
  }
}

bool AppView::taken_down(const std::string& uri_or_did) const {
  return takedowns_.count(uri_or_did) > 0;
}

bool AppView::blocked_pair(const std::string& a, const std::string& b) const {
  if (a.empty() || b.empty() || a == b) return false;
  return block_edges_.count({a, b}) > 0 || block_edges_.count({b, a}) > 0;
}

std::string AppView::label_decision(
    const std::string& uri, const std::string& author, const ViewerContext& viewer,
    std::vector<std::pair<std::string, std::string>>* out) const {
  std::string decision;
  for (const auto& [key, label] : labels_) {
    const auto& [src, target, val] = key;
    (void)label;
    if (target != uri && target != author) continue;
    if (!viewer.labeler_dids.count(src)) continue;
    if (out) out->emplace_back(src, val);
    auto pref = viewer.label_prefs.find(val);
    std::string p = pref == viewer.label_prefs.end() ? "show" : pref->second;
    if (p == "hide") {
      decision = "hide";
    } else if (p == "warn" && decision != "hide") {
      decision = "warn";
    }
  }
  return decision;
}

const AppView::PostRecord* AppView::post(const std::string& uri) const {
  auto it = posts_.find(uri);
  return it == posts_.end() ? nullptr : &it->second;
}

bool AppView::post_visible(const PostRecord& post, const ViewerContext& viewer,
                           bool apply_mutes) const {
  if (taken_down(post.uri) || taken_down(post.author)) return false;
  if (!viewer.did.empty() && blocked_pair(viewer.did, post.author)) return false;
  if (apply_mutes) {
    if (viewer.muted_actors.count(post.author)) return false;
    if (post.root_uri && viewer.muted_threads.count(*post.root_uri)) return false;
  }
  if (label_decision(post.uri, post.author, viewer, nullptr) == "hide") return false;
  // a reply interacting across a block pair is dropped for every viewer
  if (post.parent_uri) {
    const PostRecord* parent = this->post(*post.parent_uri);
    if (parent && blocked_pair(post.author, parent->author)) return false;
    if (post.root_uri && *post.root_uri != post.uri) {
      const PostRecord* root = this->post(*post.root_uri);
      if (root && blocked_pair(post.author, root->author)) return false;
    }
  }
  return true;
}

std::int64_t AppView::visible_like_count(const std::string& uri) const {
  const PostRecord* subject = post(uri);
  if (!subject) return 0;
  std::int64_t n = 0;
  auto it = likes_.find(uri);
  if (it == likes_.end()) return 0;
  for (const std::string& like_uri : it->second) {
    std::string liker = uri_author(like_uri);
    if (blocked_pair(liker, subject->author)) continue;
    if (taken_down(liker) || taken_down(like_uri)) continue;
    ++n;
  }
  return n;
}

std::int64_t AppView::visible_repost_count(const std::string& uri) const {
  const PostRecord* subject = post(uri);
  if (!subject) return 0;
  std::int64_t n = 0;
  auto it = reposts_.find(uri);
  if (it == reposts_.end()) return 0;
  for (const std::string& repost_uri : it->second) {
    std::string reposter = uri_author(repost_uri);
    if (blocked_pair(reposter, subject->author)) continue;
    if (taken_down(reposter) || taken_down(repost_uri)) continue;
    ++n;
  }
  return n;
}

std::int64_t AppView::visible_reply_count(const std::string& uri) const {
  const PostRecord* subject = post(uri);
  if (!subject) return 0;
  std::int64_t n = 0;
  auto it = replies_.find(uri);
  if (it == replies_.end()) return 0;
  for (const std::string& child : it->second) {
    const PostRecord* reply = post(child);
    if (!reply) continue;
    if (taken_down(child) || taken_down(reply->author)) continue;
    if (blocked_pair(reply->author, subject->author)) continue;
    ++n;
  }
  return n;
}

std::optional<PostView> AppView::hydrate(const std::string& uri,
                                         const ViewerContext& viewer) const {
  const PostRecord* record = post(uri);
  if (!record) return std::nullopt;
  if (!post_visible(*record, viewer)) return std::nullopt;
  PostView view;
  view.uri = record->uri;
  view.cid = record->cid;
  view.author = record->author;
  auto status = handle_status_.find(record->author);
  if (status != handle_status_.end()) {
    view.author_handle = status->second.state == identity::HandleStatus::State::Invalid
                             ? "handle.invalid"
                             : status->second.handle;
  }
  view.text = record->text;
  view.created_at = record->created_at;
  view.like_count = visible_like_count(uri);
  view.repost_count = visible_repost_count(uri);
  view.reply_count = visible_reply_count(uri);
  view.images = record->images;
  std::string decision = label_decision(uri, record->author, viewer, &view.labels);
  view.warn = decision == "warn";
  std::sort(view.labels.begin(), view.labels.end());
  return view;
}

Outcome<PostView> AppView::get_post(const std::string& uri,
                                    const ViewerContext& viewer) const {
  auto view = hydrate(uri, viewer);
  if (!view) return Outcome<PostView>::failure("not-found", uri);
  return Outcome<PostView>::success(std::move(*view));
}

Outcome<ThreadNode> AppView::get_thread(const std::string& uri,
                                        const ViewerContext& viewer) const {
  const PostRecord* target = post(uri);
  if (!target) return Outcome<ThreadNode>::failure("not-found", uri);
  if (taken_down(uri) || taken_down(target->author)) {
    return Outcome<ThreadNode>::failure("takedown", uri);
  }
  std::string root_uri = target->root_uri ? *target->root_uri : uri;
  const PostRecord* root = post(root_uri);
  if (!root) root = target;

  std::function<std::optional<ThreadNode>(const std::string&)> build =
      [&](const std::string& node_uri) -> std::optional<ThreadNode> {
    const PostRecord* record = post(node_uri);
    if (!record) return std::nullopt;
    if (record->parent_uri && !reply_allowed(*record, *root)) return std::nullopt;
    auto view = hydrate(node_uri, viewer);
    if (!view) return std::nullopt;  // muted subtrees collapse for this viewer
    ThreadNode node;
    node.post = std::move(*view);
    auto children = replies_.find(node_uri);
    if (children != replies_.end()) {
      std::vector<std::string> ordered = children->second;
      std::sort(ordered.begin(), ordered.end(), [&](const auto& a, const auto& b) {
        const PostRecord* pa = post(a);
        const PostRecord* pb = post(b);
        std::int64_t ta = pa ? pa->created_at : 0;
        std::int64_t tb = pb ? pb->created_at : 0;
        if (ta != tb) return ta < tb;
        return a < b;
      });
      for (const std::string& child : ordered) {
        auto sub = build(child);
        if (sub) node.replies.push_back(std::move(*sub));
      }
    }
    return node;
  };

  auto tree = build(root_uri);
  if (!tree) return Outcome<ThreadNode>::failure("not-found", root_uri);
  return Outcome<ThreadNode>::success(std::move(*tree));
}

bool AppView::reply_allowed(const PostRecord& reply, const PostRecord& root) const {
  if (reply.author == root.author) return true;  // authors may reply to themselves
  auto gate = threadgates_.find(root.uri);
  if (gate == threadgates_.end()) return true;
  for (const std::string& rule : gate->second.allow) {
    if (rule == "anyone") return true;
    if (rule == "followed" && follow_edges_.count({root.author, reply.author})) return true;
    if (rule == "mentioned") {
      for (const std::string& did : root.mentions) {
        if (did == reply.author) return true;
      }
    }
    if (rule.starts_with("list/")) {
      if (list_member_counts_.count({rule.substr(5), reply.author})) return true;
    }
  }
  return false;
}

Outcome<TimelinePage> AppView::get_timeline(const std::string& viewer_did,
                                            const ViewerContext& viewer,
                                            const std::optional<std::string>& cursor,
                                            size_t limit) const {
  if (!known_dids_.count(viewer_did)) {
    return Outcome<TimelinePage>::failure("unknown-did", viewer_did);
  }
  struct Candidate {
    std::int64_t sort_at;
    std::string item_uri;
    std::string post_uri;
    std::optional<std::string> reposted_by;
  };
  std::vector<Candidate> candidates;
  for (const auto& [edge, n] : follow_edges_) {
    if (n <= 0 || edge.first != viewer_did) continue;
    const std::string& followed = edge.second;
    if (auto it = author_posts_.find(followed); it != author_posts_.end()) {
      for (const std::string& uri : it->second) {
        const PostRecord* record = post(uri);
        if (record) candidates.push_back({record->created_at, uri, uri, std::nullopt});
      }
    }
    if (auto it = author_reposts_.find(followed); it != author_reposts_.end()) {
      for (const std::string& repost_uri : it->second) {
        auto created = repost_created_.find(repost_uri);
        auto stored = records_.find(repost_uri);
        if (created == repost_created_.end() || stored == records_.end()) continue;
        auto subject = ref_uri(stored->second.first, "subject");
        if (!subject) continue;
        candidates.push_back({created->second, repost_uri, *subject, followed});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.sort_at != b.sort_at) return a.sort_at > b.sort_at;
    return a.item_uri < b.item_uri;
  });

  std::optional<std::pair<std::int64_t, std::string>> resume;
  if (cursor) {
    size_t slash = cursor->find('/');
    if (slash == std::string::npos) {
      return Outcome<TimelinePage>::failure("bad-cursor", *cursor);
    }
    try {
      resume = {std::stoll(cursor->substr(0, slash)), cursor->substr(slash + 1)};
    } catch (const std::exception&) {
      return Outcome<TimelinePage>::failure("bad-cursor", *cursor);
    }
  }

  TimelinePage page;
  std::set<std::string> seen_posts;
  for (const Candidate& c : candidates) {
    if (seen_posts.count(c.post_uri)) continue;  // keep the earliest occurrence
    const PostRecord* record = post(c.post_uri);
    if (!record) continue;
    if (!post_visible(*record, viewer)) continue;
    if (c.reposted_by) {
      if (taken_down(c.item_uri) || taken_down(*c.reposted_by)) continue;
      if (blocked_pair(*c.reposted_by, record->author)) continue;
      if (!viewer.did.empty() && blocked_pair(viewer.did, *c.reposted_by)) continue;
      if (viewer.muted_actors.count(*c.reposted_by)) continue;
    }
    seen_posts.insert(c.post_uri);
    bool after_cursor =
        !resume || c.sort_at < resume->first ||
        (c.sort_at == resume->first && c.item_uri > resume->second);
    if (!after_cursor) continue;
    if (page.items.size() >= limit) {
      // one more visible item exists; previous item's key is the cursor
      return Outcome<TimelinePage>::success(std::move(page));
    }
    auto view = hydrate(c.post_uri, viewer);
    if (!view) continue;
    TimelineItem item;
    item.post = std::move(*view);
    item.reposted_by = c.reposted_by;
    item.sort_at = c.sort_at;
    item.item_uri = c.item_uri;
    page.items.push_back(std::move(item));
    page.cursor = std::to_string(c.sort_at) + "/" + c.item_uri;
  }
  page.cursor.reset();  // walked to the end: no further pages
  return Outcome<TimelinePage>::success(std::move(page));
}

Outcome<ProfileView> AppView::get_profile(const std::string& did) const {
  if (!known_dids_.count(did)) return Outcome<ProfileView>::failure("unknown-did", did);
  ProfileView view;
  view.did = did;
  auto status = handle_status_.find(did);
  if (status != handle_status_.end()) {
    view.handle = status->second.state == identity::HandleStatus::State::Invalid
                      ? "handle.invalid"
                      : status->second.handle;
    switch (status->second.state) {
      case identity::HandleStatus::State::Verified: view.handle_state = "verified"; break;
      case identity::HandleStatus::State::Invalid: view.handle_state = "invalid"; break;
      case identity::HandleStatus::State::Unchecked: view.handle_state = "unchecked"; break;
    }
  }
  if (auto profile = profiles_.find(did); profile != profiles_.end()) {
    view.display_name = profile->second.first;
    view.description = profile->second.second;
  }
  auto followers = get_followers(did);
  auto follows = get_follows(did);
  view.followers_count = followers.ok() ? static_cast<std::int64_t>(followers.value().size()) : 0;
  view.follows_count = follows.ok() ? static_cast<std::int64_t>(follows.value().size()) : 0;
  if (auto it = author_posts_.find(did); it != author_posts_.end()) {
    for (const std::string& uri : it->second) {
      if (!taken_down(uri)) ++view.posts_count;
    }
  }
  return Outcome<ProfileView>::success(std::move(view));
}

Outcome<std::vector<std::string>> AppView::get_followers(const std::string& did) const {
  if (!known_dids_.count(did)) {
    return Outcome<std::vector<std::string>>::failure("unknown-did", did);
  }
  std::vector<std::string> out;
  for (const auto& [edge, n] : follow_edges_) {
    if (n <= 0 || edge.second != did) continue;
    const std::string& follower = edge.first;
    if (blocked_pair(follower, did)) continue;
    if (taken_down(follower)) continue;
    out.push_back(follower);
  }
  return Outcome<std::vector<std::string>>::success(std::move(out));
}

Outcome<std::vector<std::string>> AppView::get_follows(const std::string& did) const {
  if (!known_dids_.count(did)) {
    return Outcome<std::vector<std::string>>::failure("unknown-did", did);
  }
  std::vector<std::string> out;
  for (const auto& [edge, n] : follow_edges_) {
    if (n <= 0 || edge.first != did) continue;
    if (blocked_pair(did, edge.second)) continue;
    if (taken_down(edge.second)) continue;
    out.push_back(edge.second);
  }
  return Outcome<std::vector<std::string>>::success(std::move(out));
}

Outcome<std::vector<std::string>> AppView::get_likes(const std::string& uri) const {
  const PostRecord* subject = post(uri);
  if (!subject) return Outcome<std::vector<std::string>>::failure("not-found", uri);
  std::set<std::string> likers;
  if (auto it = likes_.find(uri); it != likes_.end()) {
    for (const std::string& like_uri : it->second) {
      std::string liker = uri_author(like_uri);
      if (blocked_pair(liker, subject->author)) continue;
      if (taken_down(liker) || taken_down(like_uri)) continue;
      likers.insert(liker);
    }
  }
  return Outcome<std::vector<std::string>>::success(
      std::vector<std::string>(likers.begin(), likers.end()));
}

Outcome<FeedPage> AppView::get_feed(const std::string& feed_uri, const ViewerContext& viewer,
                                    const std::optional<std::string>& cursor,
                                    size_t limit) const {
  FeedPage page;
  if (!skeleton_) {
    page.generator_unavailable = true;
    return Outcome<FeedPage>::failure("generator-unavailable", "no generator wired");
  }
  auto skeleton = skeleton_(feed_uri, cursor, limit, viewer.did);
  if (!skeleton.ok()) {
    page.generator_unavailable = true;
    return Outcome<FeedPage>::failure("generator-unavailable", skeleton.error());
  }
  for (const std::string& uri : skeleton.value().post_uris) {
    auto view = hydrate(uri, viewer);
    if (!view) continue;  // unindexable or moderated away
    page.posts.push_back(std::move(*view));
  }
  page.cursor = skeleton.value().cursor;
  return Outcome<FeedPage>::success(std::move(page));
}

Outcome<std::optional<Bytes>> AppView::get_blob(const std::string& did, const Cid& cid) {
  auto cached = blob_cache_.find(cid);
  if (cached != blob_cache_.end()) {
    return Outcome<std::optional<Bytes>>::success(cached->second);
  }
  if (!blob_fetcher_) return Outcome<std::optional<Bytes>>::success(std::nullopt);
  auto blob = blob_fetcher_(did, cid);
  if (!blob) return Outcome<std::optional<Bytes>>::success(std::nullopt);
  blob_cache_[cid] = *blob;
  return Outcome<std::optional<Bytes>>::success(std::move(blob));
}

Outcome<Unit> AppView::admin_takedown(const std::string& operator_token,
                                      const std::string& subject, bool on) {
  if (operator_token != cfg_.operator_token) {
    return Outcome<Unit>::failure("unauthorized");
  }
  if (on) {
    takedowns_.insert(subject);
  } else {
    takedowns_.erase(subject);
  }
  return ok_unit();
}

std::vector<identity::HandleStatus> AppView::check_handles() {
  std::vector<identity::HandleStatus> out;
  identity::ResolverEnv env{*net_, *directory_, *clock_};
  for (const std::string& did : known_dids_) {
    auto parsed = identity::Did::parse(did);
    if (!parsed) continue;
    auto resolved = identity::resolve_did(*parsed, env);
    if (!resolved.ok()) {
      identity::HandleStatus status;
      status.did = did;
      status.handle = handle_status_[did].handle;
      status.state = identity::HandleStatus::State::Invalid;
      status.reason = "resolution-error";
      status.checked_at = clock_->now_micros();
      handle_status_[did] = status;
      out.push_back(std::move(status));
      continue;
    }
    identity::HandleStatus status =
        identity::verify_handle(resolved.document->handle, did, env);
    handle_status_[did] = status;
    out.push_back(std::move(status));
  }
  return out;
}

void AppView::on_tick() {
  if (clock_->now_micros() >= next_handle_check_) {
    check_handles();
    next_handle_check_ = clock_->now_micros() + cfg_.handle_recheck_micros;
  }
}

identity::HandleStatus AppView::handle_status(const std::string& did) const {
  auto it = handle_status_.find(did);
  return it == handle_status_.end() ? identity::HandleStatus{} : it->second;
}

std::map<std::string, std::set<std::string>> AppView::follower_sets() const {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& [edge, n] : follow_edges_) {
    if (n > 0) out[edge.second].insert(edge.first);
  }
  return out;
}

std::vector<std::string> AppView::known_dids() const {
  return std::vector<std::string>(known_dids_.begin(), known_dids_.end());
}

}  // namespace atproto::appview
