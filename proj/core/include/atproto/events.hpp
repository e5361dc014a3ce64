#pragma once

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "atproto/repo.hpp"

namespace atproto::events {

// Sequenced notification of one repository change. `blocks` carry the new
// commit, MST nodes, and records: enough to verify every op statelessly.
struct RepoEvent {
  enum class Kind { Commit, Diff, Anchor };
  Kind kind = Kind::Commit;
  std::uint64_t seq = 0;
  std::string did;
  codec::Cid commit;
  std::optional<codec::Cid> prev;
  std::vector<repo::RecordOp> ops;
  std::map<codec::Cid, Bytes> blocks;
};

// Wire form: one DAG-CBOR map per event, length-prefixed on streams.
Bytes encode_event(const RepoEvent& event);
std::optional<RepoEvent> decode_event(BytesView data);

// uvarint length framing used by the subscription streams.
void frame_event(Bytes& out, const RepoEvent& event);
std::optional<RepoEvent> read_framed_event(BytesView data, size_t& pos);

// Stateless verification: commit block present and signed by `signing_key`,
// prev field consistent, and every op backed by an inclusion (create/update,
// with the record block hashing to the op CID) or exclusion (delete) proof
// against the commit's MST root using only the carried blocks.
bool verify_event(const RepoEvent& event, BytesView signing_key,
                  std::string* fail_reason = nullptr);

// Bounded sequenced log: replay-then-tail with exactly-once cursor
// semantics. Retention is a ring; consumers older than it must re-crawl.
// An optional append-only file makes the log restart-recoverable.
template <typename Event>
class EventLog {
 public:
  explicit EventLog(size_t retention = 10'000) : retention_(retention) {}

  struct ReadResult {
    enum class Status { Ok, TooOld, FutureCursor };
    Status status = Status::Ok;
    std::vector<Event> events;  // each carries its own seq
  };

  std::uint64_t append(Event event) {
    std::lock_guard lock(mu_);
    std::uint64_t seq = next_seq_++;
    event.seq = seq;
    if (sink_) sink_(event);
    ring_.push_back(std::move(event));
    while (ring_.size() > retention_) ring_.pop_front();
    return seq;
  }

  // cursor = last seen seq; replays events with seq > cursor.
  ReadResult read_after(std::uint64_t cursor, size_t max) const {
    std::lock_guard lock(mu_);
    ReadResult out;
    std::uint64_t head = head_seq_locked();
    if (cursor > head) {
      out.status = ReadResult::Status::FutureCursor;
      return out;
    }
    if (cursor == head) return out;
    std::uint64_t oldest = ring_.empty() ? head + 1 : ring_.front().seq;
    if (cursor + 1 < oldest) {
      out.status = ReadResult::Status::TooOld;
      return out;
    }
    for (const Event& e : ring_) {
      if (e.seq <= cursor) continue;
      out.events.push_back(e);
      if (out.events.size() >= max) break;
    }
    return out;
  }

  std::uint64_t head_seq() const {
    std::lock_guard lock(mu_);
    return head_seq_locked();
  }

  std::uint64_t oldest_seq() const {
    std::lock_guard lock(mu_);
    return oldest_seq_locked();
  }

  void set_retention(size_t retention) {
    std::lock_guard lock(mu_);
    retention_ = retention;
    while (ring_.size() > retention_) ring_.pop_front();
  }

  // Recovery hook: replaying a persisted log re-seeds seq numbering.
  void restore(std::vector<Event> events, std::uint64_t next_seq) {
    std::lock_guard lock(mu_);
    ring_.assign(events.begin(), events.end());
    while (ring_.size() > retention_) ring_.pop_front();
    next_seq_ = next_seq;
  }

  void set_sink(std::function<void(const Event&)> sink) { sink_ = std::move(sink); }

 private:
  std::uint64_t head_seq_locked() const { return next_seq_ - 1; }
  std::uint64_t oldest_seq_locked() const { return ring_.empty() ? 0 : ring_.front().seq; }

  mutable std::mutex mu_;
  size_t retention_;
  std::uint64_t next_seq_ = 1;
  std::deque<Event> ring_;
  std::function<void(const Event&)> sink_;
};

// Pull-model subscription handle. Polling keeps the simulator deterministic;
// the HTTP layer wraps it in a push loop.
template <typename Event>
class Subscription {
 public:
  Subscription(const EventLog<Event>* log, std::uint64_t cursor)
      : log_(log), cursor_(cursor) {}

  struct Pull {
    bool too_old = false;
    std::vector<Event> events;
  };

  Pull pull(size_t max = 64) {
    Pull out;
    auto read = log_->read_after(cursor_, max);
    if (read.status == EventLog<Event>::ReadResult::Status::TooOld) {
      out.too_old = true;
      return out;
    }
    out.events = std::move(read.events);
    if (!out.events.empty()) cursor_ = out.events.back().seq;
    return out;
  }

  std::uint64_t cursor() const { return cursor_; }
  void reset(std::uint64_t cursor) { cursor_ = cursor; }

 private:
  const EventLog<Event>* log_;
  std::uint64_t cursor_;
};

}  // namespace atproto::events
