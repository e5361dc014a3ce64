#include "atproto/labeler.hpp"

#include <nlohmann/json.hpp>

#include "atproto/base32.hpp"

namespace atproto::labels {

using codec::Cid;
using codec::CidLink;
using codec::Value;
using json = nlohmann::json;

Value Label::to_value(bool with_sig) const {
  Value::Map m;
  m.emplace("src", Value(src));
  m.emplace("uri", Value(uri));
  m.emplace("cid", cid ? Value(CidLink{*cid}) : Value(nullptr));
  m.emplace("val", Value(val));
  m.emplace("neg", Value(neg));
  m.emplace("createdAt", Value(created_at));
  if (with_sig) m.emplace("sig", Value(sig));
  return Value(std::move(m));
}

Bytes Label::signing_bytes() const {
  return codec::encode(to_value(false));
}

void Label::sign(const crypto::KeyPair& key) {
  sig = crypto::sign(signing_bytes(), key);
}

bool Label::verify(BytesView public_key) const {
  return crypto::verify(signing_bytes(), sig, public_key);
}

std::optional<Label> Label::from_value(const Value& v) {
  if (!v.is_map()) return std::nullopt;
  const Value* src = v.at("src");
  const Value* uri = v.at("uri");
  const Value* cid = v.at("cid");
  const Value* val = v.at("val");
  const Value* neg = v.at("neg");
  const Value* created = v.at("createdAt");
  const Value* sig = v.at("sig");
  if (!src || !src->is_string() || !uri || !uri->is_string() || !cid || !val ||
      !val->is_string() || !neg || !neg->is_bool() || !created || !created->is_int() ||
      !sig || !sig->is_bytes()) {
    return std::nullopt;
  }
  Label label;
  label.src = src->as_string();
  label.uri = uri->as_string();
  if (cid->is_link()) {
    label.cid = cid->as_link();
  } else if (!cid->is_null()) {
    return std::nullopt;
  }
  label.val = val->as_string();
  label.neg = neg->as_bool();
  label.created_at = created->as_int();
  label.sig = sig->as_bytes();
  return label;
}

std::string label_to_json(const Label& label) {
  json j;
  j["seq"] = label.seq;
  j["src"] = label.src;
  j["uri"] = label.uri;
  j["cid"] = label.cid ? json(label.cid->str()) : json(nullptr);
  j["val"] = label.val;
  j["neg"] = label.neg;
  j["createdAt"] = label.created_at;
  j["sig"] = "b" + base32::encode(label.sig);
  return j.dump();
}

std::optional<Label> label_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  Label label;
  label.seq = j.value("seq", 0ull);
  if (!j.contains("src") || !j.contains("uri") || !j.contains("val")) return std::nullopt;
  label.src = j["src"];
  label.uri = j["uri"];
  if (j.contains("cid") && !j["cid"].is_null()) {
    auto cid = Cid::parse(j["cid"].get<std::string>());
    if (!cid) return std::nullopt;
    label.cid = *cid;
  }
  label.val = j["val"];
  label.neg = j.value("neg", false);
  label.created_at = j.value("createdAt", 0ll);
  std::string sig = j.value("sig", "");
  if (sig.size() > 1 && sig[0] == 'b') {
    auto raw = base32::decode(std::string_view(sig).substr(1));
    if (!raw) return std::nullopt;
    label.sig = *raw;
  }
  return label;
}

}  // namespace atproto::labels

namespace atproto::feeds {

using codec::Value;
using labels::Label;
using relay::FirehoseEvent;

Labeler::Labeler(std::string did, crypto::KeyPair key, Clock& clock)
    : did_(std::move(did)), key_(std::move(key)), clock_(&clock) {}

void Labeler::emit(Label label) {
  label.sign(key_);
  labels_.append(std::move(label));
}

size_t Labeler::pump(events::Subscription<FirehoseEvent>& sub) {
  size_t n = 0;
  while (true) {
    auto pull = sub.pull();
    if (pull.events.empty()) return n;
    for (const FirehoseEvent& event : pull.events) consume(event);
    n += pull.events.size();
  }
}

void Labeler::consume(const FirehoseEvent& event) {
  for (const repo::RecordOp& op : event.origin.ops) {
    std::string uri = "at://" + event.origin.did + "/" + op.path;
    if (op.action == repo::RecordOp::Action::Delete) {
      auto it = active_.find(uri);
      if (it == active_.end()) continue;
      for (const std::string& val : it->second) {
        Label neg;
        neg.src = did_;
        neg.uri = uri;
        neg.val = val;
        neg.neg = true;
        neg.created_at = clock_->now_micros();
        emit(std::move(neg));
      }
      active_.erase(it);
      continue;
    }
    auto block = event.origin.blocks.find(*op.record);
    if (block == event.origin.blocks.end()) continue;
    Value record;
    try {
      record = codec::decode(block->second);
    } catch (const codec::CborError&) {
      continue;
    }
    auto path = repo::RecordPath::parse(op.path);
    if (!path) continue;
    for (const LabelRule& rule : rules_) {
      if (rule.collection != path->collection) continue;
      if (!rule.authors.empty() && !rule.authors.count(event.origin.did)) continue;
      if (!rule.substring.empty()) {
        const Value* text = record.at("text");
        if (!text || !text->is_string() ||
            text->as_string().find(rule.substring) == std::string::npos) {
          continue;
        }
      }
      if (active_[uri].count(rule.value)) continue;  // already labeled
      Label label;
      label.src = did_;
      label.uri = uri;
      label.cid = *op.record;
      label.val = rule.value;
      label.created_at = clock_->now_micros();
      active_[uri].insert(rule.value);
      emit(std::move(label));
    }
  }
}

Outcome<events::Subscription<Label>> Labeler::subscribe(std::uint64_t cursor) const {
  if (cursor > labels_.head_seq()) {
    return Outcome<events::Subscription<Label>>::failure("future-cursor");
  }
  return Outcome<events::Subscription<Label>>::success(
      events::Subscription<Label>(&labels_, cursor));
}

FeedGenerator::FeedGenerator(std::string did) : did_(std::move(did)) {}

std::string FeedGenerator::register_feed(const std::string& rkey, FeedRule rule) {
  std::string uri = "at://" + did_ + "/" + lexicon::kGenerator + "/" + rkey;
  feeds_[uri] = std::move(rule);
  indexes_[uri];
  return uri;
}

size_t FeedGenerator::pump(events::Subscription<FirehoseEvent>& sub) {
  size_t n = 0;
  while (true) {
    auto pull = sub.pull();
    if (pull.events.empty()) return n;
    for (const FirehoseEvent& event : pull.events) consume(event);
    n += pull.events.size();
  }
}

void FeedGenerator::consume(const FirehoseEvent& event) {
  for (const repo::RecordOp& op : event.origin.ops) {
    auto path = repo::RecordPath::parse(op.path);
    if (!path || path->collection != lexicon::kPost) continue;
    std::string uri = "at://" + event.origin.did + "/" + op.path;
    if (op.action == repo::RecordOp::Action::Delete) {
      auto feeds_it = post_feeds_.find(uri);
      if (feeds_it == post_feeds_.end()) continue;
      auto created = post_created_.find(uri);
      for (const std::string& feed : feeds_it->second) {
        indexes_[feed].erase(Entry{created->second, uri});
      }
      post_feeds_.erase(feeds_it);
      post_created_.erase(uri);
      continue;
    }
    auto block = event.origin.blocks.find(*op.record);
    if (block == event.origin.blocks.end()) continue;
    Value record;
    try {
      record = codec::decode(block->second);
    } catch (const codec::CborError&) {
      continue;
    }
    const Value* text = record.at("text");
    const Value* created = record.at("createdAt");
    if (!text || !text->is_string() || !created || !created->is_int()) continue;
    for (const auto& [feed, rule] : feeds_) {
      if (!rule.authors.empty() && !rule.authors.count(event.origin.did)) continue;
      if (!rule.hashtag.empty() &&
          text->as_string().find(rule.hashtag) == std::string::npos) {
        continue;
      }
      indexes_[feed].insert(Entry{created->as_int(), uri});
      post_feeds_[uri].push_back(feed);
      post_created_[uri] = created->as_int();
    }
  }
}

Outcome<FeedGenerator::Skeleton> FeedGenerator::get_skeleton(
    const std::string& feed_uri, const std::optional<std::string>& cursor,
    size_t limit) const {
  auto it = indexes_.find(feed_uri);
  if (it == indexes_.end()) {
    return Outcome<Skeleton>::failure("unknown-feed", feed_uri);
  }
  Skeleton out;
  out.feed_uri = feed_uri;
  std::optional<Entry> resume;
  if (cursor) {
    size_t slash = cursor->find('/');
    if (slash == std::string::npos) {
      return Outcome<Skeleton>::failure("bad-cursor", *cursor);
    }
    try {
      resume = Entry{std::stoll(cursor->substr(0, slash)), cursor->substr(slash + 1)};
    } catch (const std::exception&) {
      return Outcome<Skeleton>::failure("bad-cursor", *cursor);
    }
  }
  for (const Entry& entry : it->second) {
    if (resume && !(*resume < entry)) continue;  // strictly after the cursor
    out.post_uris.push_back(entry.uri);
    if (out.post_uris.size() >= limit) {
      out.cursor = std::to_string(entry.created_at) + "/" + entry.uri;
      break;
    }
  }
  return Outcome<Skeleton>::success(std::move(out));
}

}  // namespace atproto::feeds
