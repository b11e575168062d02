#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "nudge/stimulus.hpp"

// Wire protocol between the host and the wrist device. Every frame travels as
//   [len:1][opcode:1][payload]     len = 1 + payload size
// and multi-byte fields are big-endian.
//
//   0x01 NUDGE            kind:1 (0 beep, 1 vibrate, 2 zap) intensity:1 (0..100) [seq:1]
//   0x02 SUBSCRIBE_ACCEL  -
//   0x81 ACK              status:1 (0 ok) [seq:1]
//   0x82 ACCEL            x:i16 y:i16 z:i16 (milli-g) timestamp_ms:u32
//   0x83 ERROR            reason:1 (1 malformed, 2 busy, 3 unsupported)
//
// NUDGE and ACK each have exactly two legal lengths: with or without the
// trailing sequence byte. The host always sends it so the device can drop
// a retried command it already executed.
namespace nudge::protocol {

enum class Opcode : std::uint8_t {
  Nudge = 0x01,
  SubscribeAccel = 0x02,
  Ack = 0x81,
  Accel = 0x82,
  Error = 0x83,
};

enum class ErrorReason : std::uint8_t { Malformed = 1, Busy = 2, Unsupported = 3 };

struct NudgeFrame {
  actuator::StimulusKind kind = actuator::StimulusKind::Vibrate;
  int intensity = 0;  // clamped to [0, 100] when encoded
  std::optional<std::uint8_t> seq;
  bool operator==(const NudgeFrame&) const = default;
};

struct SubscribeAccelFrame {
  bool operator==(const SubscribeAccelFrame&) const = default;
};

struct AckFrame {
  std::uint8_t status = 0;
  std::optional<std::uint8_t> seq;
  bool ok() const noexcept { return status == 0; }
  bool operator==(const AckFrame&) const = default;
};

struct AccelFrame {
  std::int16_t x = 0;
  std::int16_t y = 0;
  std::int16_t z = 0;
  std::uint32_t timestamp_ms = 0;
  bool operator==(const AccelFrame&) const = default;
};

struct ErrorFrame {
  ErrorReason reason = ErrorReason::Malformed;
  bool operator==(const ErrorFrame&) const = default;
};

using Frame = std::variant<NudgeFrame, SubscribeAccelFrame, AckFrame, AccelFrame, ErrorFrame>;

Opcode opcode_of(const Frame& frame);

// Frame body (opcode + payload), without the length prefix.
std::vector<std::uint8_t> encode_frame(const Frame& frame);

// Parses a frame body. Throws MalformedFrame carrying the offset of the first
// offending byte: an unknown opcode, a bad field value, or a wrong length.
Frame decode_frame(std::span<const std::uint8_t> body);

// Length-prefixed encoding for the stream.
std::vector<std::uint8_t> to_wire(const Frame& frame);
std::vector<std::uint8_t> to_wire(std::span<const std::uint8_t> body);

// Reassembles length-prefixed bodies from an arbitrary byte stream. A zero
// length prefix yields an empty body, which decode_frame rejects.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<std::vector<std::uint8_t>> next();
  std::size_t pending_bytes() const noexcept { return buf_.size(); }

 private:
  std::deque<std::uint8_t> buf_;
};

}  // namespace nudge::protocol
