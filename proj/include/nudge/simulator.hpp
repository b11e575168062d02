#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nudge/protocol.hpp"
#include "nudge/rng.hpp"

namespace nudge::sim {

// How the simulated sleeper reacts to a stimulus.
struct SleeperModel {
  enum class Kind { Always, Never, Threshold, Logistic };
  Kind kind = Kind::Always;
  int min_intensity = 70;  // Threshold: moves iff intensity >= min_intensity
  double midpoint = 50.0;  // Logistic: p = 1 / (1 + exp(-slope * (gain * intensity - midpoint)))
  double slope = 0.15;
  double kind_gain[3] = {0.6, 0.8, 1.0};  // beep, vibrate, zap
  std::int64_t movement_delay_ms = 3000;
  int burst_samples = 5;

  // Non-decreasing in intensity for every kind.
  double movement_probability(actuator::StimulusKind kind, int intensity) const;
};

struct FaultScript {
  std::vector<std::uint64_t> drop_responses;  // 1-based ordinals of inbound frames left unanswered
  std::uint64_t busy_every = 0;               // every n-th NUDGE answered with ERROR busy
  bool mute = false;                          // never answer anything
};

struct Scenario {
  std::string name = "default";
  std::uint64_t seed = 1;
  double time_scale = 1.0;  // simulated ms per wall ms when served over a socket
  SleeperModel sleeper;
  FaultScript faults;

  static Scenario standard();
  static Scenario deaf_sleeper();
  static Scenario responds_at(int min_intensity);

  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct SimulatorStats {
  std::uint64_t frames_seen = 0;
  std::uint64_t malformed = 0;
  std::uint64_t nudges_delivered = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t responses_dropped = 0;
  std::uint64_t movements = 0;
  std::optional<actuator::Stimulus> last_stimulus;
};

// Transport-free device model: feed inbound frame bodies, collect the single
// response (if any) and poll accelerometer telemetry against a caller-supplied
// clock.
class DeviceSimulator {
 public:
  explicit DeviceSimulator(Scenario scenario = Scenario::standard());

  // Returns the encoded response body, or nullopt when the script drops it.
  std::optional<std::vector<std::uint8_t>> handle(std::span<const std::uint8_t> body,
                                                  std::int64_t now_ms);

  // Telemetry samples due at or before now_ms (only while subscribed).
  std::vector<protocol::AccelFrame> poll_telemetry(std::int64_t now_ms);

  SimulatorStats stats() const;
  const Scenario& scenario() const noexcept { return scenario_; }

 private:
  std::optional<protocol::Frame> respond(std::span<const std::uint8_t> body, std::int64_t now_ms);
  void deliver(const protocol::NudgeFrame& nudge, std::int64_t now_ms);

  mutable std::mutex mu_;
  Scenario scenario_;
  SplitMix64 rng_;
  SimulatorStats stats_;
  bool subscribed_ = false;
  std::optional<std::uint8_t> last_seq_;
  std::uint64_t nudges_seen_ = 0;
  std::deque<protocol::AccelFrame> pending_;  // ordered by timestamp
};

// Serves a DeviceSimulator over TCP, one connection at a time. Simulated time
// is wall time since start() multiplied by the scenario's time_scale.
class DeviceServer {
 public:
  DeviceServer(Scenario scenario, std::string listen_addr);
  ~DeviceServer();

  DeviceServer(const DeviceServer&) = delete;
  DeviceServer& operator=(const DeviceServer&) = delete;

  // Binds and starts serving; returns the bound port.
  int start();
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

  int port() const noexcept { return port_; }
  std::string address() const;
  DeviceSimulator& simulator() noexcept { return sim_; }
  std::uint64_t connections() const noexcept { return connections_.load(); }

 private:
  void serve();
  void serve_connection(int fd);
  std::int64_t sim_now_ms() const;

  DeviceSimulator sim_;
  std::string listen_addr_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> connections_{0};
  std::thread thread_;
  std::int64_t start_ns_ = 0;
};

}  // namespace nudge::sim
