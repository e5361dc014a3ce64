#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "atproto/clock.hpp"
#include "atproto/labels.hpp"
#include "atproto/lexicon.hpp"
#include "atproto/outcome.hpp"
#include "atproto/relay.hpp"

namespace atproto::feeds {

// Declarative match predicate: collection, optional substring over post
// text, optional author set. Arbitrary-code rules are out of scope.
struct LabelRule {
  std::string collection = lexicon::kPost;
  std::string substring;
  std::set<std::string> authors;  // empty = any author
  std::string value;
};

// Firehose consumer emitting signed labels; deleting a labeled record emits
// a negation.
class Labeler {
 public:
  Labeler(std::string did, crypto::KeyPair key, Clock& clock);

  const std::string& did() const { return did_; }
  void add_rule(LabelRule rule) { rules_.push_back(std::move(rule)); }

  size_t pump(events::Subscription<relay::FirehoseEvent>& sub);
  void consume(const relay::FirehoseEvent& event);

  Outcome<events::Subscription<labels::Label>> subscribe(std::uint64_t cursor) const;
  const events::EventLog<labels::Label>& log() const { return labels_; }

 private:
  void emit(labels::Label label);

  std::string did_;
  crypto::KeyPair key_;
  Clock* clock_;
  std::vector<LabelRule> rules_;
  events::EventLog<labels::Label> labels_;
  // subject uri -> values currently labeled (for negation on delete)
  std::map<std::string, std::set<std::string>> active_;
};

struct FeedRule {
  std::set<std::string> authors;  // empty = any author
  std::string hashtag;            // empty = all posts from the author set
};

// Maintains its own firehose-fed index of matching posts and serves
// skeleton pages: deterministic reverse-chronological order with stable
// pagination.
class FeedGenerator {
 public:
  explicit FeedGenerator(std::string did);

  const std::string& did() const { return did_; }
  std::string register_feed(const std::string& rkey, FeedRule rule);

  size_t pump(events::Subscription<relay::FirehoseEvent>& sub);
  void consume(const relay::FirehoseEvent& event);

  struct Skeleton {
    std::string feed_uri;
    std::vector<std::string> post_uris;
    std::optional<std::string> cursor;
  };
  Outcome<Skeleton> get_skeleton(const std::string& feed_uri,
                                 const std::optional<std::string>& cursor,
                                 size_t limit) const;

 private:
  struct Entry {
    std::int64_t created_at = 0;
    std::string uri;
    bool operator<(const Entry& other) const {
      if (created_at != other.created_at) return created_at > other.created_at;
      return uri < other.uri;  // newest first, uri tie-break
    }
  };

  std::string did_;
  std::map<std::string, FeedRule> feeds_;            // feed uri -> rule
  std::map<std::string, std::set<Entry>> indexes_;   // feed uri -> ordered posts
  std::map<std::string, std::vector<std::string>> post_feeds_;  // post uri -> feeds
  std::map<std::string, std::int64_t> post_created_;
};

}  // namespace atproto::feeds
