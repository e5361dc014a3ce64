#pragma once

#include <chrono>
#include <cstdint>

namespace atproto {

// Microseconds since the unix epoch. The simulation runs on a virtual
// clock; production services use the system clock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_micros() const = 0;
};

class VirtualClock : public Clock {
 public:
  explicit VirtualClock(std::int64_t start_micros = 1'700'000'000'000'000)
      : now_(start_micros) {}

  std::int64_t now_micros() const override { return now_; }
  void advance_micros(std::int64_t delta) { now_ += delta; }
  void advance_seconds(std::int64_t s) { now_ += s * 1'000'000; }
  void advance_hours(std::int64_t h) { advance_seconds(h * 3600); }

 private:
  std::int64_t now_;
};

class SystemClock : public Clock {
 public:
  std::int64_t now_micros() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

}  // namespace atproto
