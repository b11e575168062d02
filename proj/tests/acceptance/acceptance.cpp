// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failures.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "oracles/oracles.hpp"
#include "support.hpp"
#include "nudge/corpus.hpp"
#include "nudge/detector.hpp"
#include "nudge/device.hpp"
#include "nudge/dsp.hpp"
#include "nudge/errors.hpp"
#include "nudge/nnet.hpp"
#include "nudge/protocol.hpp"
#include "nudge/service.hpp"
#include "nudge/simulator.hpp"
#include "nudge/store.hpp"
#include "nudge/training.hpp"

using namespace nudge;
using Json = nlohmann::json;
using Stopwatch = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// The trained model is shared between the training and replay criteria.
std::optional<nnet::SnoreModel> g_model;

Verdict vote_oracle() {
  std::string mismatch;
  for (std::size_t k = 1; k <= 10; ++k) {
    std::uint64_t fired = 0;
    for (unsigned mask = 0; mask < 1024; ++mask) {
      std::vector<detector::ChunkDecision> w;
      for (unsigned i = 0; i < 10; ++i) w.push_back(detector::make_decision(i, (mask >> i) & 1u ? 1.0 : 0.0, -20));
      fired += detector::vote(w, k);
    }
    if (fired != oracle::windows_with_at_least(k)) mismatch += " K=" + std::to_string(k);
  }
  return {mismatch.empty(), mismatch.empty() ? "1024 windows x K=1..10 agree (176 at K=7)" : "mismatch at" + mismatch};
}

Verdict gradient() {
  const auto model = nnet::init_weights(11, nnet::ArchSpec::reduced());
  SplitMix64 g(21);
  dsp::FeatureMatrix f(98, 13);
  for (double& v : f.data()) v = g.uniform(-3, 3);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int label : {0, 1}) {
    nnet::GradCheckOptions opts;
    opts.n_params = 250;
    opts.seed = 7 + label;
    const auto r = nnet::gradient_check(model, {f, label}, opts);
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
  }
  return {worst < 1e-4 && checked >= 200,
          fmt("max relative error %.3g", worst) + " over " + std::to_string(checked) + " parameters"};
}

Verdict training_accuracy() {
  corpus::CorpusSpec spec;
  spec.seed = 42;
  training::RunConfig rc;
  rc.epochs = 20;
  rc.seed = 42;
  auto r = training::train_and_evaluate(corpus::generate_synthetic_corpus(spec), rc);
  g_model = r.model;
  return {r.n_test == 200 && r.test_accuracy >= 0.90,
          fmt("held-out accuracy %.3f", r.test_accuracy) + " on " + std::to_string(r.n_test) + " samples (500/500 synthetic, 20 epochs)"};
}

Verdict mfcc_oracle() {
  double worst = 0.0;
  const auto corpus = corpus::generate_synthetic_corpus(corpus::CorpusSpec{20, 30, 0.274, 10, 9});
  for (const auto& s : corpus) {
    const auto got = dsp::compute_mfcc(s.chunk);
    const auto want = oracle::mfcc(s.chunk.samples);
    for (std::size_t f = 0; f < got.rows(); ++f)
      for (std::size_t k = 0; k < got.cols(); ++k) worst = std::max(worst, std::abs(got(f, k) - want[f][k]));
  }
  double ortho = 0.0;
  for (std::size_t n = 1; n <= 64; ++n) {
    std::vector<std::vector<double>> cols(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> e(n, 0.0);
      e[j] = 1.0;
      cols[j] = dsp::dct_ii(e);
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += cols[a][i] * cols[b][i];
        ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
  }
  return {corpus.size() == 50 && worst < 1e-6 && ortho < 1e-9,
          fmt("50 chunks, max |diff| %.3g", worst) + fmt("; DCT orthonormality error %.3g for N<=64", ortho)};
}

// One hour of audio: runs of snoring and ambient sound, lengths drawn at random.
std::vector<double> random_night(std::uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<double> out;
  out.reserve(3600 * dsp::kChunkSamples);
  bool snoring = false;
  std::size_t chunk = 0;
  while (chunk < 3600) {
    const std::size_t run = snoring ? 20 + g.below(120) : 10 + g.below(180);
    for (std::size_t i = 0; i < run && chunk < 3600; ++i, ++chunk) {
      const auto s = snoring ? corpus::synth_snore(g.next())
                             : corpus::synth_ambient(static_cast<corpus::Ambient>(g.below(10)), g.next());
      out.insert(out.end(), s.begin(), s.end());
    }
    snoring = !snoring;
  }
  return out;
}

std::string event_bytes(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().filename().string().rfind("events-", 0) == 0) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.filename().string() + "\n" + testing::read_file(f);
  return all;
}

std::filesystem::path g_replay_logs;

Verdict end_to_end(const std::filesystem::path& work) {
  if (!g_model) return {false, "no trained model available"};
  const auto model_path = work / "model.json";
  nnet::save_model(*g_model, model_path);
  g_replay_logs = work / "logs-a";

  std::size_t nudges = 0, identical = 0, hours = 0;
  double worst_latency = 0.0;
  std::int64_t min_gap = INT64_MAX;
  for (std::uint64_t seed : {1001u, 1002u}) {
    const auto audio = random_night(seed);
    service::ServiceConfig cfg;
    cfg.model_path = model_path.string();
    cfg.device = "inproc";
    cfg.seed = seed;
    cfg.calibration.enabled = seed % 2 == 0;
    cfg.log_dir = (work / "logs-a").string();
    const auto a = service::process_replay(audio, cfg);
    cfg.log_dir = (work / "logs-b").string();
    const auto b = service::process_replay(audio, cfg);
    ++hours;
    identical += a.session_id == b.session_id &&
                 event_bytes(work / "logs-a" / a.session_id) == event_bytes(work / "logs-b" / b.session_id);
    std::optional<std::int64_t> last;
    for (const auto& e : a.events) {
      if (e.kind != store::EventKind::Nudge) continue;
      ++nudges;
      if (last) min_gap = std::min(min_gap, e.ts_ms - *last);
      last = e.ts_ms;
    }
    for (double l : a.nudge_latencies_ms) worst_latency = std::max(worst_latency, l);
  }
  const bool pass = identical == hours && nudges >= 2 && worst_latency < 200.0 && min_gap >= 30000;
  return {pass, std::to_string(hours) + " one-hour replays, " + std::to_string(identical) + " byte-identical, " +
                    std::to_string(nudges) + " nudges, min gap " +
                    (min_gap == INT64_MAX ? std::string("n/a") : std::to_string(min_gap) + " ms") +
                    fmt(", max latency %.2f ms", worst_latency)};
}

bool has_array(const Json& j) {
  if (j.is_array()) return true;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (has_array(v)) return true;
    }
  }
  return false;
}

Verdict privacy(const std::filesystem::path& work) {
  if (g_replay_logs.empty() || !std::filesystem::exists(g_replay_logs)) return {false, "no replay logs to audit"};
  std::size_t files = 0, lines = 0, violations = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(g_replay_logs)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto bytes = testing::read_file(e.path());
    if (bytes.find("RIFF") != std::string::npos || bytes.find("WAVE") != std::string::npos) ++violations;
    const bool events = e.path().filename().string().rfind("events-", 0) == 0;
    std::istringstream in(bytes);
    for (std::string line; std::getline(in, line);) {
      ++lines;
      const auto j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        ++violations;
      } else if (events) {
        for (const auto& [k, v] : j.items()) violations += v.is_structured();
      } else if (has_array(j)) {
        ++violations;
      }
    }
  }
  // The writer itself must refuse buffers.
  bool rejected = false;
  try {
    store::EventLog log(work / "probe", "probe");
    store::EventRecord rec;
    rec.session_id = "probe";
    Json ev = store::to_json(rec);
    ev["p_snore"] = std::vector<double>(16000, 0.0);
    log.append_json(ev);
  } catch (const SchemaViolation&) {
    rejected = true;
  }
  return {violations == 0 && files > 0 && rejected,
          std::to_string(files) + " files, " + std::to_string(lines) + " records scanned, " +
              std::to_string(violations) + " violations; array payload " + (rejected ? "rejected" : "ACCEPTED")};
}

Verdict protocol_robustness() {
  SplitMix64 g(314);
  std::size_t round_trips = 0;
  for (int i = 0; i < 10000; ++i) {
    protocol::Frame f;
    switch (g.below(5)) {
      case 0: f = protocol::NudgeFrame{static_cast<actuator::StimulusKind>(g.below(3)), int(g.below(101)), std::uint8_t(g.below(256))}; break;
      case 1: f = protocol::SubscribeAccelFrame{}; break;
      case 2: f = protocol::AckFrame{std::uint8_t(g.below(256)), std::nullopt}; break;
      case 3: f = protocol::AccelFrame{std::int16_t(g.next()), std::int16_t(g.next()), std::int16_t(g.next()), std::uint32_t(g.next())}; break;
      default: f = protocol::ErrorFrame{static_cast<protocol::ErrorReason>(1 + g.below(3))};
    }
    round_trips += protocol::decode_frame(protocol::encode_frame(f)) == f;
  }

  // Fuzz the simulator over a real socket; it must answer every frame and
  // still accept a valid nudge afterwards.
  sim::DeviceServer server(sim::Scenario::standard(), "127.0.0.1:0");
  const int port = server.start();
  auto transport = device::TcpTransport::connect("127.0.0.1:" + std::to_string(port), std::chrono::milliseconds(1000));
  std::size_t answered = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint8_t> body(g.below(12));
    for (auto& b : body) b = std::uint8_t(g.below(256));
    transport->send(body);
    if (auto reply = transport->receive(std::chrono::milliseconds(1000))) {
      try {
        protocol::decode_frame(*reply);
        ++answered;
      } catch (const MalformedFrame&) {
      }
    }
  }
  transport->send(protocol::encode_frame(protocol::NudgeFrame{actuator::StimulusKind::Vibrate, 40, 200}));
  const auto last = transport->receive(std::chrono::milliseconds(1000));
  const bool alive = last && std::holds_alternative<protocol::AckFrame>(protocol::decode_frame(*last));
  const auto seen = server.simulator().stats().frames_seen;
  transport.reset();
  server.stop();
  return {round_trips == 10000 && answered == 10000 && alive && seen == 10001,
          std::to_string(round_trips) + "/10000 round trips, " + std::to_string(answered) +
              "/10000 fuzz frames answered, simulator " + (alive ? "alive" : "DEAD") + " after fuzzing"};
}

Verdict calibration(const std::filesystem::path& work) {
  service::ServiceConfig cfg;
  cfg.device = "inproc";
  cfg.calibration.enabled = true;
  cfg.refractory_ms = 0;
  ManualClock clock(1'700'000'000'000);
  auto sim = std::make_shared<sim::DeviceSimulator>(sim::Scenario::responds_at(70));
  auto client = std::make_unique<device::DeviceClient>(
      std::make_unique<device::InProcessTransport>(sim, [&] { return clock.now_ms(); }));
  store::EventLog log(work / "calib", "calib");
  service::SessionRunner runner(cfg, "calib", std::move(client), log, clock);
  std::uint64_t seq = 0;
  std::string trace;
  int entered = -1;
  bool stayed = true;
  for (int cycle = 0; cycle < 12; ++cycle) {
    for (int i = 0; i < 80; ++i, ++seq) {
      clock.advance(1000);
      const bool snore = i < 10;
      runner.on_decision(detector::make_decision(seq, snore ? 0.9 : 0.1, snore ? -15.0 : -50.0));
    }
    const int now = runner.calibration().current_intensity;
    trace += (trace.empty() ? "" : ",") + std::to_string(now);
    const bool inside = now == 60 || now == 70;
    if (entered < 0 && inside) entered = cycle + 1;
    if (entered > 0 && !inside) stayed = false;
  }
  return {entered > 0 && entered <= 12 && stayed,
          "sleeper responds at >=70; intensity after each cycle: " + trace};
}

}  // namespace

int main() {
  testing::TempDir work("nudge-acceptance");
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {"vote_enumeration", 1.0, vote_oracle},
      {"gradient_check", 60.0, gradient},
      {"synthetic_training_accuracy", 300.0, training_accuracy},
      {"mfcc_matches_reference", 120.0, mfcc_oracle},
      {"replay_determinism_latency_refractory", 600.0, [&] { return end_to_end(work.path()); }},
      {"event_log_privacy", 60.0, [&] { return privacy(work.path()); }},
      {"protocol_fuzz_robustness", 120.0, protocol_robustness},
      {"calibration_convergence", 10.0, [&] { return calibration(work.path()); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Stopwatch::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Stopwatch::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("%s %s: %s [%.2fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures;
}
