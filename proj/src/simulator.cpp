#include "nudge/simulator.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "net.hpp"
#include "nudge/errors.hpp"

namespace nudge::sim {

namespace {

using Json = nlohmann::json;
using protocol::AccelFrame;
using protocol::AckFrame;
using protocol::ErrorFrame;
using protocol::ErrorReason;

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::int16_t to_i16(double v) {
  return static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
}

const char* sleeper_name(SleeperModel::Kind k) {
  switch (k) {
    case SleeperModel::Kind::Always: return "always";
    case SleeperModel::Kind::Never: return "never";
    case SleeperModel::Kind::Threshold: return "threshold";
    case SleeperModel::Kind::Logistic: return "logistic";
  }
  return "always";
}

}  // namespace

double SleeperModel::movement_probability(actuator::StimulusKind k, int intensity) const {
  intensity = actuator::clamp_intensity(intensity);
  switch (kind) {
    case Kind::Always: return intensity > 0 ? 1.0 : 0.0;
    case Kind::Never: return 0.0;
    case Kind::Threshold: return intensity >= min_intensity ? 1.0 : 0.0;
    case Kind::Logistic: {
      const double gain = kind_gain[static_cast<std::size_t>(k)];
      return 1.0 / (1.0 + std::exp(-slope * (gain * intensity - midpoint)));
    }
  }
  return 0.0;
}

Scenario Scenario::standard() { return Scenario{}; }

Scenario Scenario::deaf_sleeper() {
  Scenario s;
  s.name = "deaf";
  s.sleeper.kind = SleeperModel::Kind::Never;
  return s;
}

Scenario Scenario::responds_at(int min_intensity) {
  Scenario s;
  s.name = "threshold-" + std::to_string(min_intensity);
  s.sleeper.kind = SleeperModel::Kind::Threshold;
  s.sleeper.min_intensity = min_intensity;
  return s;
}

Scenario Scenario::from_json(const Json& j) {
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    s.seed = j.value("seed", s.seed);
    s.time_scale = j.value("time_scale", s.time_scale);
    if (!(s.time_scale > 0.0)) throw Error("scenario time_scale must be positive");
    if (j.contains("sleeper")) {
      const Json& sl = j.at("sleeper");
      const std::string model = sl.value("model", std::string("always"));
      if (model == "always") s.sleeper.kind = SleeperModel::Kind::Always;
      else if (model == "never") s.sleeper.kind = SleeperModel::Kind::Never;
      else if (model == "threshold") s.sleeper.kind = SleeperModel::Kind::Threshold;
      else if (model == "logistic") s.sleeper.kind = SleeperModel::Kind::Logistic;
      else throw Error("unknown sleeper model '" + model + "'");
      s.sleeper.min_intensity = sl.value("min_intensity", s.sleeper.min_intensity);
      s.sleeper.midpoint = sl.value("midpoint", s.sleeper.midpoint);
      s.sleeper.slope = sl.value("slope", s.sleeper.slope);
      if (s.sleeper.slope < 0.0) throw Error("sleeper slope must be non-negative");
      if (sl.contains("kind_gain")) {
        const Json& g = sl.at("kind_gain");
        s.sleeper.kind_gain[0] = g.value("beep", s.sleeper.kind_gain[0]);
        s.sleeper.kind_gain[1] = g.value("vibrate", s.sleeper.kind_gain[1]);
        s.sleeper.kind_gain[2] = g.value("zap", s.sleeper.kind_gain[2]);
        for (double gain : s.sleeper.kind_gain) {
          if (gain < 0.0) throw Error("sleeper kind_gain must be non-negative");
        }
      }
      s.sleeper.movement_delay_ms = sl.value("movement_delay_ms", s.sleeper.movement_delay_ms);
      s.sleeper.burst_samples = sl.value("burst_samples", s.sleeper.burst_samples);
    }
    if (j.contains("faults")) {
      const Json& f = j.at("faults");
      s.faults.drop_responses =
          f.value("drop_responses", std::vector<std::uint64_t>{});
      s.faults.busy_every = f.value("busy_every", s.faults.busy_every);
      s.faults.mute = f.value("mute", s.faults.mute);
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("invalid scenario: ") + e.what());
  }
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file: " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("scenario file " + path.string() + " is not valid JSON: " + e.what());
  }
}

Json Scenario::to_json() const {
  return {
      {"name", name},
      {"seed", seed},
      {"time_scale", time_scale},
      {"sleeper",
       {{"model", sleeper_name(sleeper.kind)},
        {"min_intensity", sleeper.min_intensity},
        {"midpoint", sleeper.midpoint},
        {"slope", sleeper.slope},
        {"kind_gain",
         {{"beep", sleeper.kind_gain[0]}, {"vibrate", sleeper.kind_gain[1]}, {"zap", sleeper.kind_gain[2]}}},
        {"movement_delay_ms", sleeper.movement_delay_ms},
        {"burst_samples", sleeper.burst_samples}}},
      {"faults",
       {{"drop_responses", faults.drop_responses},
        {"busy_every", faults.busy_every},
        {"mute", faults.mute}}},
  };
}

DeviceSimulator::DeviceSimulator(Scenario scenario)
    : scenario_(std::move(scenario)), rng_(scenario_.seed) {}

std::optional<std::vector<std::uint8_t>> DeviceSimulator::handle(
    std::span<const std::uint8_t> body, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  ++stats_.frames_seen;
  const std::optional<protocol::Frame> response = respond(body, now_ms);
  const auto& drops = scenario_.faults.drop_responses;
  const bool dropped = scenario_.faults.mute ||
                       std::find(drops.begin(), drops.end(), stats_.frames_seen) != drops.end();
  if (!response || dropped) {
    ++stats_.responses_dropped;
    return std::nullopt;
  }
  return protocol::encode_frame(*response);
}

std::optional<protocol::Frame> DeviceSimulator::respond(std::span<const std::uint8_t> body,
                                                        std::int64_t now_ms) {
  protocol::Frame frame;
  try {
    frame = protocol::decode_frame(body);
  } catch (const MalformedFrame&) {
    ++stats_.malformed;
    return ErrorFrame{ErrorReason::Malformed};
  }

  if (std::holds_alternative<protocol::SubscribeAccelFrame>(frame)) {
    subscribed_ = true;
    return AckFrame{0, std::nullopt};
  }
  if (const auto* nudge = std::get_if<protocol::NudgeFrame>(&frame)) {
    ++nudges_seen_;
    if (scenario_.faults.busy_every > 0 && nudges_seen_ % scenario_.faults.busy_every == 0) {
      return ErrorFrame{ErrorReason::Busy};
    }
    if (nudge->seq && last_seq_ && *nudge->seq == *last_seq_) {
      ++stats_.duplicates;
    } else {
      deliver(*nudge, now_ms);
      if (nudge->seq) last_seq_ = nudge->seq;
    }
    return AckFrame{0, nudge->seq};
  }
  // Device-to-host opcodes make no sense inbound.
  return ErrorFrame{ErrorReason::Unsupported};
}

void DeviceSimulator::deliver(const protocol::NudgeFrame& nudge, std::int64_t now_ms) {
  ++stats_.nudges_delivered;
  stats_.last_stimulus = actuator::Stimulus{nudge.kind, nudge.intensity};
  const double p = scenario_.sleeper.movement_probability(nudge.kind, nudge.intensity);
  // Always draw, so the random stream does not depend on the sleeper model.
  const double u = rng_.uniform();
  if (u >= p) return;
  ++stats_.movements;
  const std::int64_t t0 = now_ms + scenario_.sleeper.movement_delay_ms;
  for (int k = 0; k < scenario_.sleeper.burst_samples; ++k) {
    AccelFrame a;
    a.x = to_i16(rng_.normal() * 400.0);
    a.y = to_i16(rng_.normal() * 400.0);
    a.z = to_i16(1000.0 + rng_.normal() * 300.0);
    a.timestamp_ms = static_cast<std::uint32_t>(t0 + 100 * k);
    const auto at = std::upper_bound(
        pending_.begin(), pending_.end(), a.timestamp_ms,
        [](std::uint32_t ts, const AccelFrame& f) { return ts < f.timestamp_ms; });
    pending_.insert(at, a);
  }
}

std::vector<AccelFrame> DeviceSimulator::poll_telemetry(std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  std::vector<AccelFrame> due;
  while (!pending_.empty() && static_cast<std::int64_t>(pending_.front().timestamp_ms) <= now_ms) {
    if (subscribed_) due.push_back(pending_.front());
    pending_.pop_front();
  }
  return due;
}

SimulatorStats DeviceSimulator::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

DeviceServer::DeviceServer(Scenario scenario, std::string listen_addr)
    : sim_(std::move(scenario)), listen_addr_(std::move(listen_addr)) {}

DeviceServer::~DeviceServer() { stop(); }

int DeviceServer::start() {
  listen_fd_ = net::listen_tcp(net::parse_host_port(listen_addr_), port_);
  start_ns_ = steady_ns();
  running_ = true;
  thread_ = std::thread([this] { serve(); });
  return port_;
}

void DeviceServer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  net::close_fd(listen_fd_);
}

void DeviceServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

std::string DeviceServer::address() const {
  const auto hp = net::parse_host_port(listen_addr_);
  return (hp.host.empty() ? std::string("127.0.0.1") : hp.host) + ":" + std::to_string(port_);
}

std::int64_t DeviceServer::sim_now_ms() const {
  const double wall_ms = static_cast<double>(steady_ns() - start_ns_) / 1e6;
  return static_cast<std::int64_t>(wall_ms * sim_.scenario().time_scale);
}

void DeviceServer::serve() {
  while (running_) {
    if (!net::wait_readable(listen_fd_, 50)) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    ++connections_;
    serve_connection(fd);
    net::close_fd(fd);
  }
}

void DeviceServer::serve_connection(int fd) {
  protocol::FrameReader reader;
  std::uint8_t buf[4096];
  try {
    while (running_) {
      if (net::wait_readable(fd, 10)) {
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) return;
        reader.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        while (auto body = reader.next()) {
          if (auto response = sim_.handle(*body, sim_now_ms())) {
            net::write_all(fd, protocol::to_wire(*response));
          }
        }
      }
      for (const auto& sample : sim_.poll_telemetry(sim_now_ms())) {
        net::write_all(fd, protocol::to_wire(protocol::Frame{sample}));
      }
    }
  } catch (const Error&) {
    // Peer went away mid-write; wait for the next connection.
  }
}

}  // namespace nudge::sim
