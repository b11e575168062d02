#include "nudge/device.hpp"

#include <sys/socket.h>

#include "net.hpp"
#include "nudge/errors.hpp"

namespace nudge::device {

using Clock = std::chrono::steady_clock;

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& addr,
                                                    std::chrono::milliseconds timeout) {
  try {
    const int fd = net::connect_tcp(net::parse_host_port(addr), static_cast<int>(timeout.count()));
    return std::unique_ptr<TcpTransport>(new TcpTransport(fd, addr));
  } catch (const DeviceUnreachable&) {
    throw;
  } catch (const Error& e) {
    throw DeviceUnreachable("device at tcp:" + addr + " unreachable: " + e.what());
  }
}

TcpTransport::~TcpTransport() { net::close_fd(fd_); }

void TcpTransport::send(std::span<const std::uint8_t> body) {
  try {
    net::write_all(fd_, protocol::to_wire(body));
  } catch (const MalformedFrame&) {
    throw;
  } catch (const Error& e) {
    throw DeviceUnreachable("device at tcp:" + addr_ + " unreachable: " + e.what());
  }
  note_write();
}

std::optional<std::vector<std::uint8_t>> TcpTransport::receive(std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  std::uint8_t buf[1024];
  while (true) {
    if (auto body = reader_.next()) return body;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0) return std::nullopt;
    if (!net::wait_readable(fd_, static_cast<int>(left.count()))) return std::nullopt;
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) throw DeviceUnreachable("device at tcp:" + addr_ + " closed the connection");
    reader_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
  }
}

InProcessTransport::InProcessTransport(std::shared_ptr<sim::DeviceSimulator> sim, ClockFn clock)
    : sim_(std::move(sim)), clock_(std::move(clock)) {}

void InProcessTransport::send(std::span<const std::uint8_t> body) {
  note_write();
  if (auto response = sim_->handle(body, clock_())) inbox_.push_back(std::move(*response));
}

std::optional<std::vector<std::uint8_t>> InProcessTransport::receive(std::chrono::milliseconds) {
  for (const auto& sample : sim_->poll_telemetry(clock_())) {
    inbox_.push_back(protocol::encode_frame(sample));
  }
  if (inbox_.empty()) return std::nullopt;
  auto body = std::move(inbox_.front());
  inbox_.pop_front();
  return body;
}

DeviceClient::DeviceClient(std::unique_ptr<Transport> transport, ClientOptions opts)
    : transport_(std::move(transport)), opts_(opts) {}

void DeviceClient::stash_if_telemetry(const protocol::Frame& frame) {
  if (const auto* a = std::get_if<protocol::AccelFrame>(&frame)) {
    telemetry_.push_back(*a);
    ++stats_.telemetry;
  }
}

std::optional<protocol::Frame> DeviceClient::await_response(std::optional<std::uint8_t> seq) {
  const auto deadline = Clock::now() + opts_.timeout;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0) return std::nullopt;
    auto body = transport_->receive(left);
    if (!body) return std::nullopt;
    protocol::Frame frame;
    try {
      frame = protocol::decode_frame(*body);
    } catch (const MalformedFrame&) {
      continue;  // garbage from the device is not a response
    }
    if (const auto* ack = std::get_if<protocol::AckFrame>(&frame)) {
      // A late ACK for an earlier request carries a different sequence byte.
      if (!seq || !ack->seq || *ack->seq == *seq) return frame;
      continue;
    }
    if (std::holds_alternative<protocol::ErrorFrame>(frame)) return frame;
    stash_if_telemetry(frame);
  }
}

protocol::AckFrame DeviceClient::transact(const protocol::Frame& request) {
  std::lock_guard lock(mu_);
  const auto body = protocol::encode_frame(request);
  std::optional<std::uint8_t> seq;
  if (const auto* n = std::get_if<protocol::NudgeFrame>(&request)) seq = n->seq;

  ++stats_.requests;
  for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
    if (attempt > 0) ++stats_.retries;
    transport_->send(body);
    const auto response = await_response(seq);
    if (!response) {
      ++stats_.timeouts;
      continue;
    }
    if (const auto* err = std::get_if<protocol::ErrorFrame>(&*response)) {
      const int reason = static_cast<int>(err->reason);
      throw DeviceRejected(reason, "device rejected request with reason " + std::to_string(reason));
    }
    const auto& ack = std::get<protocol::AckFrame>(*response);
    if (!ack.ok()) {
      throw DeviceRejected(ack.status, "device answered with status " + std::to_string(ack.status));
    }
    return ack;
  }
  throw DeviceUnreachable("no response from " + transport_->describe() + " after " +
                          std::to_string(opts_.retries + 1) + " attempts of " +
                          std::to_string(opts_.timeout.count()) + " ms");
}

protocol::AckFrame DeviceClient::nudge(actuator::StimulusKind kind, int intensity) {
  std::uint8_t seq;
  {
    std::lock_guard lock(mu_);
    seq = next_seq_++;
  }
  return transact(protocol::NudgeFrame{kind, actuator::clamp_intensity(intensity), seq});
}

protocol::AckFrame DeviceClient::subscribe_accel() {
  return transact(protocol::SubscribeAccelFrame{});
}

std::vector<protocol::AccelFrame> DeviceClient::drain_telemetry(std::chrono::milliseconds wait) {
  std::lock_guard lock(mu_);
  auto timeout = wait;
  while (auto body = transport_->receive(timeout)) {
    timeout = std::chrono::milliseconds(0);
    try {
      stash_if_telemetry(protocol::decode_frame(*body));
    } catch (const MalformedFrame&) {
    }
  }
  std::vector<protocol::AccelFrame> out(telemetry_.begin(), telemetry_.end());
  telemetry_.clear();
  return out;
}

TransactionStats DeviceClient::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace nudge::device
