#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nudge/protocol.hpp"
#include "nudge/simulator.hpp"

namespace nudge::device {

// Moves frame bodies to and from a device. Implementations add and strip the
// length prefix themselves.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(std::span<const std::uint8_t> body) = 0;
  // Next inbound frame body, or nullopt if none arrived within the timeout.
  virtual std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) = 0;
  virtual std::string describe() const = 0;
  std::uint64_t frames_written() const noexcept { return frames_written_; }
  // Steady-clock instant the most recent frame was handed to the OS (or simulator).
  std::chrono::steady_clock::time_point last_write() const noexcept { return last_write_; }

 protected:
  void note_write() noexcept {
    ++frames_written_;
    last_write_ = std::chrono::steady_clock::now();
  }

 private:
  std::uint64_t frames_written_ = 0;
  std::chrono::steady_clock::time_point last_write_{};
};

class TcpTransport final : public Transport {
 public:
  // Throws DeviceUnreachable if the connection cannot be made.
  static std::unique_ptr<TcpTransport> connect(const std::string& addr,
                                               std::chrono::milliseconds timeout);
  ~TcpTransport() override;

  void send(std::span<const std::uint8_t> body) override;
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) override;
  std::string describe() const override { return "tcp:" + addr_; }

 private:
  TcpTransport(int fd, std::string addr) : fd_(fd), addr_(std::move(addr)) {}
  int fd_;
  std::string addr_;
  protocol::FrameReader reader_;
};

// Talks to a DeviceSimulator in the same process on a caller-supplied clock.
// Nothing ever blocks: a missing response is reported as an immediate timeout.
class InProcessTransport final : public Transport {
 public:
  using ClockFn = std::function<std::int64_t()>;
  InProcessTransport(std::shared_ptr<sim::DeviceSimulator> sim, ClockFn clock);

  void send(std::span<const std::uint8_t> body) override;
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) override;
  std::string describe() const override { return "inproc:" + sim_->scenario().name; }

  sim::DeviceSimulator& simulator() noexcept { return *sim_; }

 private:
  std::shared_ptr<sim::DeviceSimulator> sim_;
  ClockFn clock_;
  std::deque<std::vector<std::uint8_t>> inbox_;
};

struct ClientOptions {
  std::chrono::milliseconds timeout{2000};
  int retries = 1;
};

struct TransactionStats {
  std::uint64_t requests = 0;
  std::uint64_t retries = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t telemetry = 0;
};

// Request/response layer: at most one outstanding request; every request
// ends in exactly one Ack, a DeviceRejected, or a DeviceUnreachable. ACCEL
// frames that arrive meanwhile are queued for drain_telemetry().
class DeviceClient {
 public:
  explicit DeviceClient(std::unique_ptr<Transport> transport, ClientOptions opts = {});

  // Sends a NUDGE (intensity clamped to [0, 100]) with the next sequence byte;
  // one retry with the same sequence byte on timeout.
  protocol::AckFrame nudge(actuator::StimulusKind kind, int intensity);
  protocol::AckFrame subscribe_accel();

  // Generic transaction for frames that expect an ACK.
  protocol::AckFrame transact(const protocol::Frame& request);

  // Reads whatever is pending (waiting at most `wait`) and returns queued telemetry.
  std::vector<protocol::AccelFrame> drain_telemetry(
      std::chrono::milliseconds wait = std::chrono::milliseconds(0));

  TransactionStats stats() const;
  Transport& transport() noexcept { return *transport_; }
  std::string describe() const { return transport_->describe(); }

 private:
  std::optional<protocol::Frame> await_response(std::optional<std::uint8_t> seq);
  void stash_if_telemetry(const protocol::Frame& frame);

  mutable std::mutex mu_;
  std::unique_ptr<Transport> transport_;
  ClientOptions opts_;
  std::uint8_t next_seq_ = 0;
  std::deque<protocol::AccelFrame> telemetry_;
  TransactionStats stats_;
};

}  // namespace nudge::device
