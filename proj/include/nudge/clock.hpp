#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>

#include "nudge/rng.hpp"

namespace nudge {

// Epoch-millisecond time source injected into everything that stamps records.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

// Epoch captured once at construction, advanced by the steady clock so stamps
// never go backwards when wall time is adjusted.
class SystemClock final : public Clock {
 public:
  SystemClock();
  std::int64_t now_ms() const override;

 private:
  std::int64_t epoch_ms_;
  std::chrono::steady_clock::time_point origin_;
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
  std::int64_t now_ms() const override { return now_.load(); }
  void set(std::int64_t ms) { now_.store(ms); }
  void advance(std::int64_t ms) { now_.fetch_add(ms); }

 private:
  std::atomic<std::int64_t> now_;
};

// 26-character Crockford base32 ULID: 48-bit millisecond time then 80 random
// bits. Lexicographic order follows time order.
std::string make_ulid(std::int64_t ms, SplitMix64& rng);

}  // namespace nudge
