#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nudge/clock.hpp"
#include "nudge/config.hpp"
#include "nudge/detector.hpp"
#include "nudge/device.hpp"
#include "nudge/dsp.hpp"
#include "nudge/nnet.hpp"
#include "nudge/store.hpp"

namespace nudge::service {

// Maps one chunk to p_snore. The default wraps a loaded model; tests swap in
// scripted probabilities.
using ChunkClassifier = std::function<double(const dsp::AudioChunk&)>;

ChunkClassifier model_classifier(std::shared_ptr<const nnet::SnoreModel> model);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Builds the device client named by cfg.device, or nullptr for a dry run.
// "inproc" variants run the simulator on `clock`.
std::unique_ptr<device::DeviceClient> make_device_client(const ServiceConfig& cfg,
                                                         const Clock& clock);

struct SessionCounters {
  std::uint64_t chunks_seen = 0;
  std::uint64_t chunks_dropped = 0;
  std::uint64_t windows_voted = 0;
  std::uint64_t triggers = 0;
  std::uint64_t suppressed = 0;
  std::uint64_t nudges_sent = 0;
  std::uint64_t nudges_failed = 0;
  std::uint64_t calibrations = 0;
};

nlohmann::json to_json(const SessionCounters& c);

enum class DeviceStatus { None, Connected, Disconnected };
const char* to_string(DeviceStatus s);

// Drives one session: decision -> event log -> detection cycle -> actuation
// -> calibration. Single-threaded; the live pipeline calls it from its
// actuation stage only.
class SessionRunner {
 public:
  using EventSink = std::function<void(const store::EventRecord&)>;

  SessionRunner(const ServiceConfig& cfg, std::string session_id,
                std::unique_ptr<device::DeviceClient> client, store::EventLog& log,
                const Clock& clock, EventSink sink = {});

  // Convenience for synchronous callers: classify, then on_decision.
  void on_chunk(const dsp::AudioChunk& chunk, const ChunkClassifier& classify);

  // `completed` is when the chunk's last sample was captured.
  void on_decision(const detector::ChunkDecision& decision,
                   std::chrono::steady_clock::time_point completed = std::chrono::steady_clock::now());
  // A chunk lost to backpressure.
  void on_drop(std::uint64_t seq_no);
  // Drains device telemetry and settles any calibration whose window closed.
  void poll();

  // Discards the partial window. Pending calibration observations are dropped.
  SessionCounters finish();

  // Wall-clock latency (ms) from completion of the tenth chunk of a
  // triggering window to the write of the NUDGE frame.
  const std::vector<double>& nudge_latencies_ms() const noexcept { return latencies_ms_; }

  const SessionCounters& counters() const noexcept { return counters_; }
  const detector::CycleState& cycle_state() const noexcept { return cycle_.state(); }
  const actuator::CalibrationState& calibration() const noexcept { return cal_; }
  DeviceStatus device_status() const noexcept { return device_status_; }
  const std::string& session_id() const noexcept { return session_id_; }

 private:
  struct PendingCalibration {
    std::int64_t nudge_ms = 0;
    int intensity = 0;
    bool moved = false;
    bool retriggered = false;
  };

  void emit(store::EventRecord e);
  void handle_step(const detector::StepResult& r, std::chrono::steady_clock::time_point t0);
  void actuate(const detector::TriggerEvent& t, std::chrono::steady_clock::time_point t0);
  void settle_calibration(std::int64_t now, bool force_failure);
  void ensure_subscribed();

  ServiceConfig cfg_;
  std::string session_id_;
  std::unique_ptr<device::DeviceClient> client_;
  store::EventLog& log_;
  const Clock& clock_;
  EventSink sink_;
  detector::DetectionCycle cycle_;
  actuator::CalibrationState cal_;
  std::optional<PendingCalibration> pending_;
  bool subscribed_ = false;
  SessionCounters counters_;
  DeviceStatus device_status_ = DeviceStatus::None;
  std::vector<double> latencies_ms_;
};

struct ReplayOptions {
  // Overrides the model named in the config.
  ChunkClassifier classifier;
  // Epoch ms of the first sample; chunk i completes at start_ms + (i+1)*1000.
  std::int64_t start_ms = 1'700'000'000'000;
  std::optional<std::string> session_id;
};

struct ReplayResult {
  std::string session_id;
  SessionCounters counters;
  std::vector<store::EventRecord> events;
  std::vector<double> nudge_latencies_ms;
  std::size_t discarded_tail_samples = 0;
};

// Runs a recording through the pipeline on a simulated clock. The same file
// and config produce byte-identical event logs.
ReplayResult process_replay(std::span<const double> samples, const ServiceConfig& cfg,
                            const ReplayOptions& opts = {});
ReplayResult process_replay(const std::filesystem::path& wav, const ServiceConfig& cfg,
                            const ReplayOptions& opts = {});

// Fixed-capacity FIFO; a push into a full queue evicts the oldest entry.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  // Returns the evicted entry, if any.
  std::optional<T> push(T item) {
    std::optional<T> evicted;
    {
      std::lock_guard lk(mu_);
      if (items_.size() == capacity_) {
        evicted = std::move(items_.front());
        items_.pop_front();
      }
      items_.push_back(std::move(item));
      high_water_ = std::max(high_water_, items_.size());
    }
    cv_.notify_one();
    return evicted;
  }

  // Blocks until an item is available, the timeout passes, or the queue is
  // closed and empty.
  std::optional<T> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool drained() const {
    std::lock_guard lk(mu_);
    return closed_ && items_.empty();
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return items_.size();
  }
  std::size_t high_water() const {
    std::lock_guard lk(mu_);
    return high_water_;
  }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::size_t high_water_ = 0;
  bool closed_ = false;
};

// Live sample source. read() fills up to out.size() samples, returning how
// many it wrote; 0 means nothing arrived within the timeout. eof() turns true
// once the source is exhausted.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t read(std::span<double> out, std::chrono::milliseconds timeout) = 0;
  virtual bool eof() const = 0;
};

// Raw s16le mono PCM from a file descriptor (stdin, a FIFO, a file).
class FdPcmSource final : public SampleSource {
 public:
  explicit FdPcmSource(int fd, bool owns_fd = false);
  ~FdPcmSource() override;
  std::size_t read(std::span<double> out, std::chrono::milliseconds timeout) override;
  bool eof() const override { return eof_; }

 private:
  int fd_;
  bool owns_;
  bool eof_ = false;
  std::vector<std::uint8_t> carry_;
};

// Pre-loaded samples delivered at `speed` times real time (0 = as fast as
// the reader asks).
class BufferSource final : public SampleSource {
 public:
  BufferSource(std::vector<double> samples, double speed = 1.0);
  std::size_t read(std::span<double> out, std::chrono::milliseconds timeout) override;
  bool eof() const override { return pos_ >= samples_.size(); }

 private:
  std::vector<double> samples_;
  double speed_;
  std::size_t pos_ = 0;
  std::chrono::steady_clock::time_point start_;
  bool started_ = false;
};

// Opens the source named by cfg.capture.
std::unique_ptr<SampleSource> open_capture(const std::string& spec);

struct SessionStatus {
  bool running = false;
  std::optional<std::string> session_id;
  std::string phase = "idle";  // idle | collecting | refractory
  SessionCounters counters;
  std::size_t current_window_votes = 0;
  std::size_t current_window_size = 0;
  DeviceStatus device = DeviceStatus::None;
  std::optional<int> calibration_intensity;
};

nlohmann::json to_json(const SessionStatus& s);

struct ServiceOptions {
  std::shared_ptr<const Clock> clock;                    // default SystemClock
  ChunkClassifier classifier;                            // default: model from config
  std::function<std::unique_ptr<SampleSource>()> source; // default: open_capture(cfg.capture)
  std::size_t queue_capacity = 2;
};

// Owns configuration, the active session and its three-stage pipeline
// (capture -> inference -> actuation). At most one session runs at a time.
class Service {
 public:
  using Subscriber = std::function<void(const nlohmann::json&)>;

  explicit Service(ServiceConfig cfg, ServiceOptions opts = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ServiceConfig config() const;
  // Throws ConfigError on invalid values, ContractViolation while a session runs.
  void set_config(const ServiceConfig& cfg);

  // Throws StartupError (model, device or capture failure) or
  // ContractViolation if a session is already running.
  std::string start_session();
  // Drains the pipeline and closes the session. Throws NotFound if `id` is
  // not the running session and not a known closed one.
  nlohmann::json stop_session(const std::string& id);
  // Blocks until the running session ends (capture EOF or stop_session).
  void wait_session();

  SessionStatus status() const;
  std::vector<store::SessionRecord> sessions() const;
  std::vector<store::EventRecord> events(const store::EventQuery& q) const;

  // Live feed: every event record of the running session as it is appended.
  // Returns a handle for unsubscribe.
  std::uint64_t subscribe(Subscriber fn);
  void unsubscribe(std::uint64_t handle);

  std::size_t queue_high_water() const;

 private:
  struct Active;

  void broadcast(const nlohmann::json& msg);
  void capture_loop(Active& a);
  void inference_loop(Active& a);
  void actuation_loop(Active& a);
  nlohmann::json finish_locked(std::unique_lock<std::mutex>& lk);

  mutable std::mutex mu_;
  std::condition_variable ended_cv_;
  ServiceConfig cfg_;
  ServiceOptions opts_;
  std::shared_ptr<const Clock> clock_;
  SplitMix64 id_rng_;
  std::unique_ptr<Active> active_;
  std::size_t last_high_water_ = 0;

  mutable std::mutex sub_mu_;
  std::uint64_t next_sub_ = 1;
  std::vector<std::pair<std::uint64_t, Subscriber>> subscribers_;
};

}  // namespace nudge::service
