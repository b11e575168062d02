#include <doctest.h>

#include "nudge/errors.hpp"
#include "nudge/protocol.hpp"
#include "nudge/rng.hpp"
#include "nudge/simulator.hpp"

using namespace nudge;
using namespace nudge::protocol;
using Bytes = std::vector<std::uint8_t>;

namespace {

Frame random_frame(SplitMix64& g) {
  const auto opt_seq = [&]() -> std::optional<std::uint8_t> {
    if (g.below(2)) return static_cast<std::uint8_t>(g.below(256));
    return std::nullopt;
  };
  switch (g.below(5)) {
    case 0:
      return NudgeFrame{static_cast<actuator::StimulusKind>(g.below(3)), static_cast<int>(g.below(101)), opt_seq()};
    case 1:
      return SubscribeAccelFrame{};
    case 2:
      return AckFrame{static_cast<std::uint8_t>(g.below(256)), opt_seq()};
    case 3:
      return AccelFrame{static_cast<std::int16_t>(g.next()), static_cast<std::int16_t>(g.next()),
                        static_cast<std::int16_t>(g.next()), static_cast<std::uint32_t>(g.next())};
    default:
      return ErrorFrame{static_cast<ErrorReason>(1 + g.below(3))};
  }
}

std::size_t malformed_offset(const Bytes& b) {
  try {
    decode_frame(b);
  } catch (const MalformedFrame& e) {
    return e.offset();
  }
  return 999;
}

}  // namespace

TEST_CASE("worked examples") {
  CHECK(encode_frame(NudgeFrame{actuator::StimulusKind::Vibrate, 40, std::nullopt}) == Bytes{0x01, 0x01, 0x28});
  CHECK(encode_frame(AckFrame{0, std::nullopt}) == Bytes{0x81, 0x00});
  CHECK(to_wire(AckFrame{0, std::nullopt}) == Bytes{0x02, 0x81, 0x00});
  CHECK(encode_frame(NudgeFrame{actuator::StimulusKind::Zap, 100, 7}) == Bytes{0x01, 0x02, 0x64, 0x07});
  CHECK(encode_frame(SubscribeAccelFrame{}) == Bytes{0x02});
  CHECK(encode_frame(AccelFrame{1, -1, 1000, 0x01020304}) ==
        Bytes{0x82, 0x00, 0x01, 0xFF, 0xFF, 0x03, 0xE8, 0x01, 0x02, 0x03, 0x04});
  CHECK(encode_frame(ErrorFrame{ErrorReason::Busy}) == Bytes{0x83, 0x02});
  // Intensity is clamped on the way out.
  CHECK(encode_frame(NudgeFrame{actuator::StimulusKind::Beep, 180, std::nullopt}) == Bytes{0x01, 0x00, 0x64});

  CHECK(std::get<NudgeFrame>(decode_frame(Bytes{0x01, 0x01, 0x28})).intensity == 40);
  CHECK(std::get<AckFrame>(decode_frame(Bytes{0x81, 0x00})).ok());
  CHECK(opcode_of(decode_frame(Bytes{0x83, 0x03})) == Opcode::Error);
}

TEST_CASE("malformed frames report the offending offset") {
  CHECK(malformed_offset({}) == 0);
  CHECK(malformed_offset({0x7F}) == 0);
  CHECK(malformed_offset({0x01, 0x03, 0x10}) == 1);
  CHECK(malformed_offset({0x01, 0x01, 0x65}) == 2);
  CHECK(malformed_offset({0x01, 0x01}) == 2);
  CHECK(malformed_offset({0x01, 0x01, 0x10, 0x00, 0x00}) == 4);
  CHECK(malformed_offset({0x02, 0x00}) == 1);
  CHECK(malformed_offset({0x83, 0x00}) == 1);
  CHECK(malformed_offset({0x83, 0x04}) == 1);
  CHECK(malformed_offset({0x82, 0, 0, 0}) == 4);
}

TEST_CASE("10k random frames round-trip") {
  SplitMix64 g(2024);
  for (int i = 0; i < 10000; ++i) {
    const Frame f = random_frame(g);
    const Bytes body = encode_frame(f);
    CHECK(decode_frame(body) == f);
    const Bytes wire = to_wire(f);
    REQUIRE(wire.size() == body.size() + 1);
    CHECK(wire[0] == body.size());
  }
}

TEST_CASE("10k fuzz bodies either decode canonically or fail in bounds") {
  SplitMix64 g(77);
  sim::DeviceSimulator dev;
  std::size_t decoded = 0;
  for (int i = 0; i < 10000; ++i) {
    Bytes b(g.below(14));
    for (auto& x : b) x = static_cast<std::uint8_t>(g.below(256));
    // Bias towards known opcodes so the field checks get exercised.
    if (!b.empty() && g.below(2)) b[0] = std::array<std::uint8_t, 5>{0x01, 0x02, 0x81, 0x82, 0x83}[g.below(5)];
    try {
      const Frame f = decode_frame(b);
      CHECK(encode_frame(f) == b);
      ++decoded;
    } catch (const MalformedFrame& e) {
      CHECK(e.offset() <= b.size());
    }
    const auto reply = dev.handle(b, i);
    REQUIRE(reply);
    CHECK_NOTHROW(decode_frame(*reply));
  }
  CHECK(decoded > 100);
  CHECK(dev.stats().frames_seen == 10000);
}

TEST_CASE("frame reader reassembles arbitrary splits") {
  SplitMix64 g(5);
  std::vector<Frame> frames;
  Bytes stream;
  for (int i = 0; i < 500; ++i) {
    frames.push_back(random_frame(g));
    const auto w = to_wire(frames.back());
    stream.insert(stream.end(), w.begin(), w.end());
  }
  FrameReader reader;
  std::vector<Frame> got;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t n = std::min<std::size_t>(1 + g.below(9), stream.size() - pos);
    reader.feed(std::span(stream).subspan(pos, n));
    pos += n;
    while (auto body = reader.next()) got.push_back(decode_frame(*body));
  }
  CHECK(got == frames);
  CHECK(reader.pending_bytes() == 0);

  FrameReader zero;
  zero.feed(Bytes{0x00, 0x02, 0x81});
  const auto empty = zero.next();
  REQUIRE(empty);
  CHECK(empty->empty());
  CHECK_FALSE(zero.next());
  CHECK(zero.pending_bytes() == 2);
}
