#include "nudge/protocol.hpp"

#include <string>
#include <type_traits>

#include "nudge/errors.hpp"

namespace nudge::protocol {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void expect_length(std::span<const std::uint8_t> body, std::size_t a, std::size_t b,
                   const char* name) {
  if (body.size() == a || body.size() == b) return;
  // Offset of the first byte past the longest legal layout, or the end of a
  // short frame.
  const std::size_t offset = body.size() > b ? b : body.size();
  throw MalformedFrame(offset, std::string(name) + " frame has length " +
                                   std::to_string(body.size()));
}

}  // namespace

Opcode opcode_of(const Frame& frame) {
  return std::visit(Overloaded{
                        [](const NudgeFrame&) { return Opcode::Nudge; },
                        [](const SubscribeAccelFrame&) { return Opcode::SubscribeAccel; },
                        [](const AckFrame&) { return Opcode::Ack; },
                        [](const AccelFrame&) { return Opcode::Accel; },
                        [](const ErrorFrame&) { return Opcode::Error; },
                    },
                    frame);
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(opcode_of(frame)));
  std::visit(Overloaded{
                 [&](const NudgeFrame& f) {
                   out.push_back(static_cast<std::uint8_t>(f.kind));
                   out.push_back(static_cast<std::uint8_t>(actuator::clamp_intensity(f.intensity)));
                   if (f.seq) out.push_back(*f.seq);
                 },
                 [](const SubscribeAccelFrame&) {},
                 [&](const AckFrame& f) {
                   out.push_back(f.status);
                   if (f.seq) out.push_back(*f.seq);
                 },
                 [&](const AccelFrame& f) {
                   put_be16(out, static_cast<std::uint16_t>(f.x));
                   put_be16(out, static_cast<std::uint16_t>(f.y));
                   put_be16(out, static_cast<std::uint16_t>(f.z));
                   put_be32(out, f.timestamp_ms);
                 },
                 [&](const ErrorFrame& f) { out.push_back(static_cast<std::uint8_t>(f.reason)); },
             },
             frame);
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> body) {
  if (body.empty()) throw MalformedFrame(0, "empty frame");
  switch (body[0]) {
    case static_cast<std::uint8_t>(Opcode::Nudge): {
      expect_length(body, 3, 4, "NUDGE");
      if (body[1] > 2) throw MalformedFrame(1, "unknown stimulus kind " + std::to_string(body[1]));
      if (body[2] > 100) throw MalformedFrame(2, "intensity " + std::to_string(body[2]) + " > 100");
      NudgeFrame f{static_cast<actuator::StimulusKind>(body[1]), body[2], std::nullopt};
      if (body.size() == 4) f.seq = body[3];
      return f;
    }
    case static_cast<std::uint8_t>(Opcode::SubscribeAccel):
      expect_length(body, 1, 1, "SUBSCRIBE_ACCEL");
      return SubscribeAccelFrame{};
    case static_cast<std::uint8_t>(Opcode::Ack): {
      expect_length(body, 2, 3, "ACK");
      AckFrame f{body[1], std::nullopt};
      if (body.size() == 3) f.seq = body[2];
      return f;
    }
    case static_cast<std::uint8_t>(Opcode::Accel):
      expect_length(body, 11, 11, "ACCEL");
      return AccelFrame{static_cast<std::int16_t>(be16(body, 1)),
                        static_cast<std::int16_t>(be16(body, 3)),
                        static_cast<std::int16_t>(be16(body, 5)), be32(body, 7)};
    case static_cast<std::uint8_t>(Opcode::Error):
      expect_length(body, 2, 2, "ERROR");
      if (body[1] < 1 || body[1] > 3) {
        throw MalformedFrame(1, "unknown error reason " + std::to_string(body[1]));
      }
      return ErrorFrame{static_cast<ErrorReason>(body[1])};
    default:
      throw MalformedFrame(0, "unknown opcode " + std::to_string(body[0]));
  }
}

std::vector<std::uint8_t> to_wire(std::span<const std::uint8_t> body) {
  if (body.size() > 255) throw MalformedFrame(255, "frame too long for length prefix");
  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 1);
  out.push_back(static_cast<std::uint8_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> to_wire(const Frame& frame) { return to_wire(encode_frame(frame)); }

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> FrameReader::next() {
  if (buf_.empty()) return std::nullopt;
  const std::size_t len = buf_.front();
  if (buf_.size() < len + 1) return std::nullopt;
  std::vector<std::uint8_t> body(buf_.begin() + 1, buf_.begin() + 1 + static_cast<std::ptrdiff_t>(len));
  buf_.erase(buf_.begin(), buf_.begin() + 1 + static_cast<std::ptrdiff_t>(len));
  return body;
}

}  // namespace nudge::protocol
