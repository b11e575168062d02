#include "nudge/clock.hpp"

namespace nudge {

SystemClock::SystemClock()
    : epoch_ms_(std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count()),
      origin_(std::chrono::steady_clock::now()) {}

std::int64_t SystemClock::now_ms() const {
  const auto elapsed = std::chrono::steady_clock::now() - origin_;
  return epoch_ms_ + std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
}

std::string make_ulid(std::int64_t ms, SplitMix64& rng) {
  static constexpr char kAlphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
  std::string out(26, '0');
  auto t = static_cast<std::uint64_t>(ms < 0 ? 0 : ms) & ((std::uint64_t{1} << 48) - 1);
  for (int i = 9; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kAlphabet[t & 31];
    t >>= 5;
  }
  const std::uint64_t hi = rng.next();
  const std::uint64_t lo = rng.next();
  // 80 random bits: 16 from hi, 64 from lo, 5 bits per character.
  for (int i = 0; i < 16; ++i) {
    const int bit = 79 - 5 * i;  // top bit of this character
    std::uint64_t v = 0;
    for (int b = 0; b < 5; ++b) {
      const int pos = bit - b;
      const std::uint64_t word = pos >= 64 ? hi : lo;
      const int shift = pos >= 64 ? pos - 64 : pos;
      v = (v << 1) | ((word >> shift) & 1);
    }
    out[static_cast<std::size_t>(10 + i)] = kAlphabet[v];
  }
  return out;
}

}  // namespace nudge
