#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <iostream>
#include <thread>
#include <variant>

#include "net.hpp"
#include "nudge/corpus.hpp"
#include "nudge/service.hpp"

namespace nudge::service {

using Json = nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

FdPcmSource::FdPcmSource(int fd, bool owns_fd) : fd_(fd), owns_(owns_fd) {}

FdPcmSource::~FdPcmSource() {
  if (owns_) net::close_fd(fd_);
}

std::size_t FdPcmSource::read(std::span<double> out, std::chrono::milliseconds timeout) {
  if (eof_ || out.empty()) return 0;
  if (!net::wait_readable(fd_, static_cast<int>(timeout.count()))) return 0;
  std::vector<std::uint8_t> buf(out.size() * 2);
  std::size_t have = carry_.size();
  std::memcpy(buf.data(), carry_.data(), have);
  const ssize_t n = ::read(fd_, buf.data() + have, buf.size() - have);
  if (n <= 0) {
    eof_ = true;
    return 0;
  }
  have += static_cast<std::size_t>(n);
  const std::size_t samples = have / 2;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto v = static_cast<std::int16_t>(buf[2 * i] | (buf[2 * i + 1] << 8));
    out[i] = v / 32768.0;
  }
  carry_.assign(buf.begin() + static_cast<std::ptrdiff_t>(samples * 2),
                buf.begin() + static_cast<std::ptrdiff_t>(have));
  return samples;
}

BufferSource::BufferSource(std::vector<double> samples, double speed)
    : samples_(std::move(samples)), speed_(speed) {}

std::size_t BufferSource::read(std::span<double> out, std::chrono::milliseconds timeout) {
  if (eof()) return 0;
  if (!started_) {
    start_ = SteadyClock::now();
    started_ = true;
  }
  std::size_t allowed = samples_.size();
  if (speed_ > 0) {
    const auto deadline = SteadyClock::now() + timeout;
    while (true) {
      const double secs = std::chrono::duration<double>(SteadyClock::now() - start_).count();
      allowed = std::min(samples_.size(), static_cast<std::size_t>(secs * speed_ * dsp::kSampleRate));
      if (allowed > pos_ || SteadyClock::now() >= deadline) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  const std::size_t n = std::min(out.size(), allowed - std::min(allowed, pos_));
  std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(pos_), n, out.begin());
  pos_ += n;
  return n;
}

std::unique_ptr<SampleSource> open_capture(const std::string& spec) {
  if (spec == "stdin") return std::make_unique<FdPcmSource>(STDIN_FILENO, false);
  if (spec.rfind("pcm:", 0) == 0) {
    const std::string path = spec.substr(4);
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw StartupError("cannot open capture " + path + ": " + std::strerror(errno));
    return std::make_unique<FdPcmSource>(fd, true);
  }
  if (spec.rfind("wav:", 0) == 0) {
    return std::make_unique<BufferSource>(corpus::load_wav(spec.substr(4)), 1.0);
  }
  throw StartupError("unknown capture source '" + spec + "' (use stdin, pcm:<path> or wav:<path>)");
}

Json to_json(const SessionStatus& s) {
  Json j = {{"running", s.running},
            {"session_id", s.session_id ? Json(*s.session_id) : Json(nullptr)},
            {"phase", s.phase},
            {"chunks_seen", s.counters.chunks_seen},
            {"windows_voted", s.counters.windows_voted},
            {"nudges_sent", s.counters.nudges_sent},
            {"counters", to_json(s.counters)},
            {"current_window_votes", s.current_window_votes},
            {"current_window_size", s.current_window_size},
            {"device", to_string(s.device)},
            {"calibration_intensity",
             s.calibration_intensity ? Json(*s.calibration_intensity) : Json(nullptr)}};
  return j;
}

namespace {

struct DropNotice {
  std::uint64_t seq_no;
};
struct TimedDecision {
  detector::ChunkDecision decision;
  SteadyClock::time_point completed;
};
using StageItem = std::variant<TimedDecision, DropNotice>;

struct TimedChunk {
  dsp::AudioChunk chunk;
  SteadyClock::time_point completed;
};

SessionStatus status_of(const SessionRunner& r, bool running) {
  SessionStatus s;
  s.running = running;
  s.session_id = r.session_id();
  const auto& st = r.cycle_state();
  s.phase = st.phase == detector::Phase::Refractory ? "refractory" : "collecting";
  s.counters = r.counters();
  s.current_window_size = st.collected.size();
  s.current_window_votes = detector::count_votes(st.collected);
  s.device = r.device_status();
  s.calibration_intensity = r.calibration().current_intensity;
  return s;
}

}  // namespace

struct Service::Active {
  explicit Active(std::size_t capacity) : chunks(capacity), decisions(1 << 16) {}

  std::string id;
  std::string log_dir;
  std::int64_t started_ms = 0;
  std::unique_ptr<store::EventLog> log;
  std::unique_ptr<SessionRunner> runner;
  std::mutex runner_mu;
  std::unique_ptr<SampleSource> source;
  ChunkClassifier classify;
  double threshold = 0.5;
  BoundedQueue<TimedChunk> chunks;
  BoundedQueue<StageItem> decisions;
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> pipeline_done{false};
  std::string failure;
  std::thread capture, inference, actuation;
};

Service::Service(ServiceConfig cfg, ServiceOptions opts)
    : cfg_(std::move(cfg)), opts_(std::move(opts)) {
  validate(cfg_);
  clock_ = opts_.clock ? opts_.clock : std::make_shared<SystemClock>();
  id_rng_ = SplitMix64(derive_seed(cfg_.seed, static_cast<std::uint64_t>(clock_->now_ms())));
}

Service::~Service() {
  std::unique_lock lk(mu_);
  if (active_) {
    try {
      finish_locked(lk);
    } catch (const std::exception& e) {
      std::cerr << "session close failed: " << e.what() << "\n";
    }
  }
}

ServiceConfig Service::config() const {
  std::lock_guard lk(mu_);
  return cfg_;
}

void Service::set_config(const ServiceConfig& cfg) {
  validate(cfg);
  std::lock_guard lk(mu_);
  if (active_ && !active_->pipeline_done) {
    throw ContractViolation("configuration can only change between sessions");
  }
  cfg_ = cfg;
}

std::string Service::start_session() {
  std::unique_lock lk(mu_);
  if (active_) {
    if (!active_->pipeline_done) throw ContractViolation("a session is already running");
    finish_locked(lk);
  }
  const ServiceConfig cfg = cfg_;
  auto a = std::make_unique<Active>(opts_.queue_capacity);
  a->threshold = cfg.chunk_threshold;
  a->log_dir = cfg.log_dir;

  Json snapshot = to_json(cfg);
  snapshot["model_sha256"] = nullptr;
  a->classify = opts_.classifier;
  if (!a->classify) {
    try {
      auto model = std::make_shared<nnet::SnoreModel>(nnet::load_model(cfg.model_path));
      a->classify = model_classifier(std::move(model));
      snapshot["model_sha256"] = sha256_file(cfg.model_path);
    } catch (const Error& e) {
      throw StartupError(std::string("cannot load model: ") + e.what());
    }
  }
  std::unique_ptr<device::DeviceClient> client;
  try {
    client = make_device_client(cfg, *clock_);
  } catch (const Error& e) {
    throw StartupError(std::string("cannot reach device: ") + e.what());
  }
  try {
    a->source = opts_.source ? opts_.source() : open_capture(cfg.capture);
  } catch (const StartupError&) {
    throw;
  } catch (const Error& e) {
    throw StartupError(std::string("cannot open capture: ") + e.what());
  }

  a->started_ms = clock_->now_ms();
  a->id = make_ulid(a->started_ms, id_rng_);
  try {
    store::SessionStore(cfg.log_dir).open({a->id, a->started_ms, std::nullopt, snapshot, std::nullopt});
    a->log = std::make_unique<store::EventLog>(cfg.log_dir, a->id);
  } catch (const Error& e) {
    throw StartupError(std::string("cannot open session log: ") + e.what());
  }
  Active* raw = a.get();
  a->runner = std::make_unique<SessionRunner>(
      cfg, a->id, std::move(client), *a->log, *clock_,
      [this](const store::EventRecord& e) { broadcast(store::to_json(e)); });

  active_ = std::move(a);
  raw->capture = std::thread([this, raw] { capture_loop(*raw); });
  raw->inference = std::thread([this, raw] { inference_loop(*raw); });
  raw->actuation = std::thread([this, raw] { actuation_loop(*raw); });
  return raw->id;
}

void Service::capture_loop(Active& a) {
  dsp::Chunker chunker;
  std::vector<double> buf(1600);
  try {
    while (!a.stop_requested) {
      const std::size_t n = a.source->read(buf, std::chrono::milliseconds(100));
      if (n > 0) {
        std::vector<dsp::AudioChunk> ready;
        try {
          ready = chunker.push(std::span<const double>(buf.data(), n));
        } catch (const RangeError& e) {
          std::cerr << "capture: " << e.what() << "\n";
          continue;
        }
        for (auto& c : ready) a.chunks.push({std::move(c), SteadyClock::now()});
      }
      if (a.source->eof()) break;
    }
  } catch (const std::exception& e) {
    std::cerr << "capture stopped: " << e.what() << "\n";
  }
  chunker.discard_partial();
  a.chunks.close();
}

void Service::inference_loop(Active& a) {
  std::uint64_t expected = 0;
  while (true) {
    auto item = a.chunks.pop(std::chrono::milliseconds(200));
    if (!item) {
      if (a.chunks.drained()) break;
      continue;
    }
    for (; expected < item->chunk.seq_no; ++expected) a.decisions.push(DropNotice{expected});
    expected = item->chunk.seq_no + 1;
    double p = 0.0;
    try {
      p = a.classify(item->chunk);
    } catch (const std::exception& e) {
      std::cerr << "inference failed on chunk " << item->chunk.seq_no << ": " << e.what() << "\n";
      a.decisions.push(DropNotice{item->chunk.seq_no});
      continue;
    }
    const double loud = dsp::compute_loudness(item->chunk);
    const auto seq = item->chunk.seq_no;
    const auto completed = item->completed;
    item.reset();  // audio is gone before the decision moves on
    a.decisions.push(TimedDecision{detector::make_decision(seq, p, loud, a.threshold), completed});
  }
  a.decisions.close();
}

void Service::actuation_loop(Active& a) {
  while (true) {
    auto item = a.decisions.pop(std::chrono::milliseconds(200));
    std::lock_guard lk(a.runner_mu);
    try {
      if (!item) {
        if (a.decisions.drained()) break;
        a.runner->poll();
        continue;
      }
      if (auto* d = std::get_if<TimedDecision>(&*item)) {
        a.runner->on_decision(d->decision, d->completed);
      } else {
        a.runner->on_drop(std::get<DropNotice>(*item).seq_no);
      }
    } catch (const std::exception& e) {
      a.failure = e.what();
      std::cerr << "session " << a.id << " halted: " << e.what() << "\n";
      a.stop_requested = true;
      a.chunks.close();
      break;
    }
  }
  a.pipeline_done = true;
  ended_cv_.notify_all();
}

Json Service::finish_locked(std::unique_lock<std::mutex>&) {
  Active& a = *active_;
  a.stop_requested = true;
  if (a.capture.joinable()) a.capture.join();
  if (a.inference.joinable()) a.inference.join();
  // Unblock the actuation stage if inference never closed its queue.
  a.decisions.close();
  if (a.actuation.joinable()) a.actuation.join();
  last_high_water_ = a.chunks.high_water();
  SessionCounters counters;
  {
    std::lock_guard rl(a.runner_mu);
    counters = a.runner->finish();
  }
  Json summary = to_json(counters);
  if (!a.failure.empty()) summary["failure"] = a.failure;
  const std::string id = a.id;
  const std::string log_dir = a.log_dir;
  const std::int64_t ended = std::max(clock_->now_ms(), a.started_ms);
  a.runner.reset();
  a.log.reset();
  active_.reset();
  store::SessionStore(log_dir).close(id, ended, summary);
  ended_cv_.notify_all();
  return summary;
}

Json Service::stop_session(const std::string& id) {
  std::unique_lock lk(mu_);
  if (active_ && active_->id == id) return finish_locked(lk);
  if (auto rec = store::SessionStore(cfg_.log_dir).get(id); rec && rec->ended_ms) {
    return rec->summary.value_or(Json::object());
  }
  throw NotFound("no running session " + id);
}

void Service::wait_session() {
  std::unique_lock lk(mu_);
  ended_cv_.wait(lk, [&] { return !active_ || active_->pipeline_done; });
}

SessionStatus Service::status() const {
  std::lock_guard lk(mu_);
  if (!active_) return SessionStatus{};
  std::lock_guard rl(active_->runner_mu);
  return status_of(*active_->runner, !active_->pipeline_done);
}

std::vector<store::SessionRecord> Service::sessions() const {
  return store::SessionStore(config().log_dir).list();
}

std::vector<store::EventRecord> Service::events(const store::EventQuery& q) const {
  return store::query_events(config().log_dir, q);
}

std::uint64_t Service::subscribe(Subscriber fn) {
  std::lock_guard lk(sub_mu_);
  const auto h = next_sub_++;
  subscribers_.emplace_back(h, std::move(fn));
  return h;
}

void Service::unsubscribe(std::uint64_t handle) {
  std::lock_guard lk(sub_mu_);
  std::erase_if(subscribers_, [&](const auto& s) { return s.first == handle; });
}

void Service::broadcast(const Json& msg) {
  std::lock_guard lk(sub_mu_);
  for (const auto& [_, fn] : subscribers_) fn(msg);
}

std::size_t Service::queue_high_water() const {
  std::lock_guard lk(mu_);
  return active_ ? active_->chunks.high_water() : last_high_water_;
}

}  // namespace nudge::service
