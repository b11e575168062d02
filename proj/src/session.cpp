#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "nudge/corpus.hpp"
#include "nudge/service.hpp"

namespace nudge::service {

using Json = nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

ChunkClassifier model_classifier(std::shared_ptr<const nnet::SnoreModel> model) {
  if (!model) throw ContractViolation("model_classifier needs a model");
  return [model](const dsp::AudioChunk& chunk) {
    return nnet::forward(*model, dsp::compute_mfcc(chunk)).snore;
  };
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 unavailable");
  }
  std::array<char, 1 << 14> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    char b[3];
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

std::unique_ptr<device::DeviceClient> make_device_client(const ServiceConfig& cfg,
                                                         const Clock& clock) {
  if (cfg.dry_run()) return nullptr;
  device::ClientOptions opts;
  opts.timeout = std::chrono::milliseconds(cfg.device_timeout_ms);
  if (cfg.device == "inproc" || cfg.device.rfind("inproc:", 0) == 0) {
    sim::Scenario scenario = cfg.device == "inproc" ? sim::Scenario::standard()
                                                    : sim::Scenario::load(cfg.device.substr(7));
    auto simulator = std::make_shared<sim::DeviceSimulator>(std::move(scenario));
    const Clock* c = &clock;
    return std::make_unique<device::DeviceClient>(
        std::make_unique<device::InProcessTransport>(simulator, [c] { return c->now_ms(); }),
        opts);
  }
  return std::make_unique<device::DeviceClient>(
      device::TcpTransport::connect(cfg.device, opts.timeout), opts);
}

Json to_json(const SessionCounters& c) {
  return {{"chunks_seen", c.chunks_seen},     {"chunks_dropped", c.chunks_dropped},
          {"windows_voted", c.windows_voted}, {"triggers", c.triggers},
          {"suppressed", c.suppressed},       {"nudges_sent", c.nudges_sent},
          {"nudges_failed", c.nudges_failed}, {"calibrations", c.calibrations}};
}

const char* to_string(DeviceStatus s) {
  switch (s) {
    case DeviceStatus::None: return "none";
    case DeviceStatus::Connected: return "connected";
    case DeviceStatus::Disconnected: return "disconnected";
  }
  return "none";
}

SessionRunner::SessionRunner(const ServiceConfig& cfg, std::string session_id,
                             std::unique_ptr<device::DeviceClient> client, store::EventLog& log,
                             const Clock& clock, EventSink sink)
    : cfg_(cfg),
      session_id_(std::move(session_id)),
      client_(std::move(client)),
      log_(log),
      clock_(clock),
      sink_(std::move(sink)),
      cycle_({static_cast<std::size_t>(cfg.vote_k), cfg.refractory_ms}),
      cal_(actuator::make_calibration(
          std::clamp(cfg.stimulus.intensity, cfg.calibration.min_intensity,
                     cfg.calibration.max_intensity),
          cfg.calibration.step, cfg.calibration.min_intensity, cfg.calibration.max_intensity)) {
  validate(cfg_);
  if (client_) device_status_ = DeviceStatus::Connected;
}

void SessionRunner::emit(store::EventRecord e) {
  e.session_id = session_id_;
  log_.append(e);
  if (sink_) sink_(e);
}

void SessionRunner::on_chunk(const dsp::AudioChunk& chunk, const ChunkClassifier& classify) {
  const auto completed = SteadyClock::now();
  const double p = classify(chunk);
  on_decision(detector::make_decision(chunk.seq_no, p, dsp::compute_loudness(chunk),
                                      cfg_.chunk_threshold),
              completed);
}

void SessionRunner::on_decision(const detector::ChunkDecision& d, SteadyClock::time_point t0) {
  const std::int64_t now = clock_.now_ms();
  const auto result = cycle_.step(d, now);
  ++counters_.chunks_seen;
  store::EventRecord e;
  e.ts_ms = now;
  e.kind = store::EventKind::ChunkDecision;
  e.seq_no = d.seq_no;
  e.p_snore = d.p_snore;
  e.loudness_dbfs = d.loudness_dbfs;
  emit(std::move(e));
  handle_step(result, t0);
  poll();
}

void SessionRunner::on_drop(std::uint64_t seq_no) {
  const auto t0 = SteadyClock::now();
  const std::int64_t now = clock_.now_ms();
  const auto result = cycle_.skip(seq_no, now);
  ++counters_.chunks_dropped;
  store::EventRecord e;
  e.ts_ms = now;
  e.kind = store::EventKind::Drop;
  e.seq_no = seq_no;
  emit(std::move(e));
  handle_step(result, t0);
}

void SessionRunner::handle_step(const detector::StepResult& r, SteadyClock::time_point t0) {
  if (!r.window) return;
  ++counters_.windows_voted;
  const std::int64_t now = clock_.now_ms();
  if (r.window->voted_trigger && pending_ && now > pending_->nudge_ms &&
      now <= pending_->nudge_ms + cfg_.calibration.cease_window_ms) {
    pending_->retriggered = true;
  }
  if (r.window->suppressed) ++counters_.suppressed;
  if (r.trigger) actuate(*r.trigger, t0);
}

void SessionRunner::ensure_subscribed() {
  if (subscribed_ || !client_) return;
  try {
    client_->subscribe_accel();
    subscribed_ = true;
  } catch (const DeviceRejected&) {
    // Device without telemetry: movement is never observed.
    subscribed_ = true;
  } catch (const DeviceUnreachable&) {
    device_status_ = DeviceStatus::Disconnected;
  }
}

void SessionRunner::actuate(const detector::TriggerEvent& t, SteadyClock::time_point t0) {
  ++counters_.triggers;
  {
    store::EventRecord e;
    e.ts_ms = t.ts_ms;
    e.kind = store::EventKind::Trigger;
    e.seq_no = t.window_end_seq;
    e.vote_count = static_cast<std::int64_t>(t.vote_count);
    e.loudness_dbfs = t.max_loudness_dbfs;
    emit(std::move(e));
  }
  if (!client_) return;

  actuator::Stimulus stim = actuator::select_stimulus(cfg_.stimulus, t.max_loudness_dbfs);
  if (cfg_.calibration.enabled) {
    // A new nudge while the previous observation is open means the snore came back.
    settle_calibration(t.ts_ms, true);
    ensure_subscribed();
    stim.intensity = cal_.current_intensity;
  }
  stim.intensity = actuator::clamp_intensity(stim.intensity);

  std::string outcome;
  const auto writes_before = client_->transport().frames_written();
  try {
    const auto ack = client_->nudge(stim.kind, stim.intensity);
    outcome = ack.ok() ? "ok" : "rejected";
    device_status_ = DeviceStatus::Connected;
  } catch (const DeviceRejected& ex) {
    outcome = ex.reason() == 2 ? "busy" : "rejected";
    device_status_ = DeviceStatus::Connected;
  } catch (const DeviceUnreachable&) {
    outcome = "unreachable";
    device_status_ = DeviceStatus::Disconnected;
  }
  // Only a first-attempt write measures pipeline latency; a retry measures the timeout.
  if (client_->transport().frames_written() == writes_before + 1) {
    const auto sent = client_->transport().last_write();
    latencies_ms_.push_back(std::chrono::duration<double, std::milli>(sent - t0).count());
  }
  ++counters_.nudges_sent;
  if (outcome != "ok") ++counters_.nudges_failed;

  const std::int64_t now = clock_.now_ms();
  store::EventRecord n;
  n.ts_ms = now;
  n.kind = store::EventKind::Nudge;
  n.seq_no = t.window_end_seq;
  n.stimulus = actuator::to_string(stim.kind);
  n.intensity = stim.intensity;
  emit(std::move(n));
  store::EventRecord a;
  a.ts_ms = now;
  a.kind = store::EventKind::Ack;
  a.seq_no = t.window_end_seq;
  a.outcome = outcome;
  emit(std::move(a));

  if (cfg_.calibration.enabled && outcome == "ok") {
    pending_ = PendingCalibration{now, stim.intensity, false, false};
  }
}

void SessionRunner::settle_calibration(std::int64_t now, bool force_failure) {
  if (!pending_) return;
  if (!force_failure && now < pending_->nudge_ms + cfg_.calibration.cease_window_ms) return;
  actuator::NudgeOutcome o;
  o.moved = pending_->moved;
  o.snore_ceased = !force_failure && !pending_->retriggered;
  cal_ = actuator::calibrate_update(cal_, o);
  pending_.reset();
  ++counters_.calibrations;
  store::EventRecord e;
  e.ts_ms = now;
  e.kind = store::EventKind::Calibration;
  e.intensity = cal_.current_intensity;
  e.outcome = actuator::to_string(cal_.last_outcome);
  emit(std::move(e));
}

void SessionRunner::poll() {
  const std::int64_t now = clock_.now_ms();
  if (client_ && subscribed_) {
    try {
      const auto samples = client_->drain_telemetry();
      if (!samples.empty() && pending_ && now >= pending_->nudge_ms &&
          now <= pending_->nudge_ms + cfg_.calibration.move_window_ms) {
        pending_->moved = true;
      }
    } catch (const DeviceUnreachable&) {
      device_status_ = DeviceStatus::Disconnected;
    }
  }
  settle_calibration(now, false);
}

SessionCounters SessionRunner::finish() {
  cycle_.discard_partial();
  pending_.reset();
  return counters_;
}

ReplayResult process_replay(std::span<const double> samples, const ServiceConfig& cfg,
                            const ReplayOptions& opts) {
  validate(cfg);
  ChunkClassifier classify = opts.classifier;
  Json snapshot = to_json(cfg);
  if (!classify) {
    if (cfg.model_path.empty()) throw StartupError("no model_path configured");
    try {
      auto model = std::make_shared<nnet::SnoreModel>(nnet::load_model(cfg.model_path));
      classify = model_classifier(std::move(model));
      snapshot["model_sha256"] = sha256_file(cfg.model_path);
    } catch (const StartupError&) {
      throw;
    } catch (const Error& e) {
      throw StartupError(std::string("cannot load model: ") + e.what());
    }
  } else {
    snapshot["model_sha256"] = nullptr;
  }

  ManualClock clock(opts.start_ms);
  std::string id = opts.session_id.value_or("");
  if (id.empty()) {
    SplitMix64 rng(derive_seed(cfg.seed, 0x5E55));
    id = make_ulid(opts.start_ms, rng);
  }
  auto client = make_device_client(cfg, clock);

  store::SessionStore sessions(cfg.log_dir);
  sessions.open({id, opts.start_ms, std::nullopt, snapshot, std::nullopt});
  ReplayResult out;
  out.session_id = id;
  {
    store::EventLog log(cfg.log_dir, id);
    SessionRunner runner(cfg, id, std::move(client), log, clock);
    const auto chunks = dsp::chunk_audio(samples);
    out.discarded_tail_samples = samples.size() - chunks.size() * dsp::kChunkSamples;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      clock.set(opts.start_ms + static_cast<std::int64_t>(i + 1) * 1000);
      runner.on_chunk(chunks[i], classify);
    }
    out.counters = runner.finish();
    out.nudge_latencies_ms = runner.nudge_latencies_ms();
  }
  sessions.close(id, clock.now_ms(), to_json(out.counters));
  out.events = store::read_events(cfg.log_dir, id);
  return out;
}

ReplayResult process_replay(const std::filesystem::path& wav, const ServiceConfig& cfg,
                            const ReplayOptions& opts) {
  const auto samples = corpus::load_wav(wav);
  return process_replay(std::span<const double>(samples), cfg, opts);
}

}  // namespace nudge::service
