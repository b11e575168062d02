#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "support.hpp"
#include "nudge/corpus.hpp"
#include "nudge/errors.hpp"
#include "nudge/http.hpp"
#include "nudge/service.hpp"

using namespace nudge;
using namespace nudge::service;
using namespace std::chrono_literals;
using Json = nlohmann::json;
namespace beast = boost::beast;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

// Seconds marked true carry a loud 150 Hz tone, the rest near-silence.
std::vector<double> scripted_audio(const std::vector<bool>& loud_seconds) {
  std::vector<double> out;
  for (bool loud : loud_seconds) {
    const auto s = loud ? testing::sine(150.0, 0.5) : testing::sine(150.0, 0.001);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<bool> windows(const std::vector<bool>& per_window) {
  std::vector<bool> out;
  for (bool w : per_window) out.insert(out.end(), 10, w);
  return out;
}

// Stands in for the model: loud chunks are snores.
double loudness_classifier(const dsp::AudioChunk& c) { return dsp::compute_loudness(c) > -20.0 ? 0.9 : 0.1; }

ServiceConfig replay_config(const std::string& log_dir, const std::string& device = "inproc") {
  ServiceConfig cfg;
  cfg.log_dir = log_dir;
  cfg.device = device;
  return cfg;
}

std::map<store::EventKind, std::size_t> kind_counts(const std::vector<store::EventRecord>& ev) {
  std::map<store::EventKind, std::size_t> out;
  for (const auto& e : ev) ++out[e.kind];
  return out;
}

std::string events_bytes(const std::filesystem::path& log_dir, const std::string& id) {
  std::string all;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(log_dir / id)) {
    if (e.path().filename().string().rfind("events-", 0) == 0) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) all += f.filename().string() + "\n" + testing::read_file(f);
  return all;
}

struct HttpReply {
  int status = 0;
  Json body;
};

HttpReply http_call(int port, beast::http::verb verb, const std::string& target, const std::string& body = "") {
  asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)));
  beast::http::request<beast::http::string_body> req{verb, target, 11};
  req.set(beast::http::field::host, "127.0.0.1");
  req.body() = body;
  req.prepare_payload();
  beast::http::write(sock, req);
  beast::flat_buffer buf;
  beast::http::response<beast::http::string_body> res;
  beast::http::read(sock, buf, res);
  beast::error_code ec;
  sock.shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), Json::parse(res.body())};
}

ServiceOptions live_options(std::vector<double> samples, double speed, ChunkClassifier classify = loudness_classifier,
                            std::size_t capacity = 2) {
  ServiceOptions o;
  o.classifier = std::move(classify);
  o.source = [samples = std::move(samples), speed] { return std::make_unique<BufferSource>(samples, speed); };
  o.queue_capacity = capacity;
  return o;
}

}  // namespace

TEST_CASE("config validation names every bad field") {
  ServiceConfig cfg;
  cfg.vote_k = 11;
  cfg.chunk_threshold = 1.0;
  cfg.stimulus.intensity = 120;
  cfg.log_dir = "";
  const auto errs = check(cfg);
  std::set<std::string> fields;
  for (const auto& e : errs) fields.insert(e.field);
  CHECK(fields.count("vote_k") == 1);
  CHECK(fields.count("chunk_threshold") == 1);
  CHECK(fields.count("log_dir") == 1);
  CHECK(fields.size() == 4);
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK(check(ServiceConfig{}).empty());

  try {
    merge_config(Json{{"vote_k", "seven"}, {"colour", "red"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.errors().size() == 2);
  }
  const auto dash = merge_config(Json{{"stimulus", "zap"}, {"intensity", 40}, {"device", nullptr}});
  CHECK(dash.stimulus.default_kind == actuator::StimulusKind::Zap);
  CHECK(dash.stimulus.intensity == 40);
  CHECK(dash.dry_run());

  ServiceConfig full;
  full.calibration.enabled = true;
  full.device = "127.0.0.1:9750";
  full.stimulus.escalation_enabled = true;
  CHECK(merge_config(to_json(full)) == full);

  testing::TempDir dir;
  std::ofstream(dir.path() / "bad.json") << "[1,2]";
  CHECK_THROWS_AS(load_config(dir.path() / "bad.json"), ConfigError);
}

TEST_CASE("replay follows the hand trace") {
  testing::TempDir dir;
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto r = process_replay(scripted_audio(windows({false, false, true, true, true, true, true})),
                                replay_config(dir.str()), opts);
  std::vector<std::uint64_t> trigger_seqs;
  for (const auto& e : r.events) {
    if (e.kind == store::EventKind::Trigger) trigger_seqs.push_back(*e.seq_no);
  }
  CHECK(trigger_seqs == std::vector<std::uint64_t>{29, 59});
  CHECK(r.counters.chunks_seen == 70);
  CHECK(r.counters.windows_voted == 7);
  CHECK(r.counters.triggers == 2);
  CHECK(r.counters.suppressed == 3);
  CHECK(r.counters.nudges_sent == 2);
  CHECK(r.nudge_latencies_ms.size() == 2);
  for (double l : r.nudge_latencies_ms) CHECK(l < 200.0);
}

TEST_CASE("replay writes byte-identical event logs") {
  testing::TempDir a, b;
  ServiceConfig cfg = replay_config(a.str());
  cfg.calibration.enabled = true;
  cfg.stimulus.escalation_enabled = true;
  SplitMix64 g(3);
  std::vector<bool> seconds(300);
  for (std::size_t i = 0; i < seconds.size(); ++i) seconds[i] = g.uniform() < ((i / 40) % 2 ? 0.85 : 0.15);
  const auto audio = scripted_audio(seconds);
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto ra = process_replay(audio, cfg, opts);
  cfg.log_dir = b.str();
  const auto rb = process_replay(audio, cfg, opts);
  REQUIRE(ra.session_id == rb.session_id);
  CHECK(ra.counters.triggers > 1);
  const auto bytes = events_bytes(a.path(), ra.session_id);
  CHECK(bytes.size() > 10000);
  CHECK(bytes == events_bytes(b.path(), rb.session_id));
}

TEST_CASE("summary counters agree with a recount of the log") {
  testing::TempDir dir;
  ServiceConfig cfg = replay_config(dir.str(), "inproc");
  cfg.calibration.enabled = true;
  SplitMix64 g(8);
  std::vector<bool> seconds(600);
  for (auto&& s : seconds) s = g.uniform() < 0.7;
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto r = process_replay(scripted_audio(seconds), cfg, opts);
  auto n = kind_counts(r.events);
  CHECK(n[store::EventKind::ChunkDecision] == r.counters.chunks_seen);
  CHECK(n[store::EventKind::Trigger] == r.counters.triggers);
  CHECK(n[store::EventKind::Nudge] == r.counters.nudges_sent + r.counters.nudges_failed);
  CHECK(n[store::EventKind::Calibration] == r.counters.calibrations);
  std::size_t ok = 0;
  for (const auto& e : r.events) ok += e.kind == store::EventKind::Ack && e.outcome == "ok";
  CHECK(ok == r.counters.nudges_sent);

  const auto rec = store::SessionStore(dir.path()).get(r.session_id);
  REQUIRE(rec);
  REQUIRE(rec->summary);
  CHECK(*rec->summary == to_json(r.counters));
  CHECK(rec->config.at("model_sha256").is_null());
}

TEST_CASE("dry run detects but never nudges") {
  testing::TempDir dir;
  sim::DeviceServer server(sim::Scenario::standard(), "127.0.0.1:0");
  server.start();
  ServiceConfig cfg = replay_config(dir.str(), "none");
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto r = process_replay(scripted_audio(windows({true, true, true, true})), cfg, opts);
  auto n = kind_counts(r.events);
  CHECK(n[store::EventKind::Trigger] == 2);
  CHECK(n[store::EventKind::Nudge] == 0);
  CHECK(n[store::EventKind::Ack] == 0);
  CHECK(r.counters.nudges_sent == 0);
  CHECK(server.connections() == 0);
  CHECK(server.simulator().stats().frames_seen == 0);
  server.stop();
}

TEST_CASE("an unreachable device is logged and detection carries on") {
  testing::TempDir dir;
  sim::DeviceServer probe(sim::Scenario::standard(), "127.0.0.1:0");
  const int port = probe.start();
  // Mute device: connection works, answers never come.
  auto mute = sim::Scenario::standard();
  mute.faults.mute = true;
  sim::DeviceServer server(mute, "127.0.0.1:0");
  const int live = server.start();
  probe.stop();
  (void)port;
  ServiceConfig cfg = replay_config(dir.str(), "127.0.0.1:" + std::to_string(live));
  cfg.device_timeout_ms = 100;
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto r = process_replay(scripted_audio(windows({true, false, false, true})), cfg, opts);
  CHECK(r.counters.triggers == 2);
  CHECK(r.counters.nudges_failed == 2);
  std::size_t unreachable = 0;
  for (const auto& e : r.events) unreachable += e.kind == store::EventKind::Ack && e.outcome == "unreachable";
  CHECK(unreachable == 2);
  server.stop();
}

TEST_CASE("zero-length audio yields an empty, closed session") {
  testing::TempDir dir;
  ReplayOptions opts;
  opts.classifier = loudness_classifier;
  const auto r = process_replay(std::vector<double>{}, replay_config(dir.str()), opts);
  CHECK(r.events.empty());
  CHECK(r.counters.chunks_seen == 0);
  const auto rec = store::SessionStore(dir.path()).get(r.session_id);
  REQUIRE(rec);
  CHECK(rec->ended_ms);

  const auto tail = process_replay(std::vector<double>(16000 + 77, 0.0), replay_config(dir.str()),
                                   ReplayOptions{loudness_classifier, 1'800'000'000'000, std::nullopt});
  CHECK(tail.discarded_tail_samples == 77);
  CHECK(tail.counters.chunks_seen == 1);
}

TEST_CASE("a bad model stops replay before any session record") {
  testing::TempDir dir;
  ServiceConfig cfg = replay_config(dir.str());
  cfg.model_path = (dir.path() / "missing.json").string();
  CHECK_THROWS_AS(process_replay(std::vector<double>(16000, 0.0), cfg), StartupError);
  std::ofstream(dir.path() / "junk.json") << "{\"version\": \"snorenet-v1\"";
  cfg.model_path = (dir.path() / "junk.json").string();
  CHECK_THROWS_AS(process_replay(std::vector<double>(16000, 0.0), cfg), StartupError);
  CHECK(store::SessionStore(dir.path()).list().empty());
}

TEST_CASE("replay with a real model records its hash") {
  testing::TempDir dir;
  const auto model_path = dir.path() / "m.json";
  nnet::save_model(nnet::init_weights(1), model_path);
  ServiceConfig cfg = replay_config((dir.path() / "logs").string(), "none");
  cfg.model_path = model_path.string();
  const auto r = process_replay(scripted_audio({true, false, true}), cfg);
  CHECK(r.counters.chunks_seen == 3);
  const auto rec = store::SessionStore(cfg.log_dir).get(r.session_id);
  CHECK(rec->config.at("model_sha256") == sha256_file(model_path));
  CHECK(sha256_file(model_path).size() == 64);
}

TEST_CASE("bounded queue evicts the oldest entry") {
  BoundedQueue<int> q(2);
  CHECK_FALSE(q.push(1));
  CHECK_FALSE(q.push(2));
  CHECK(q.push(3) == 1);
  CHECK(q.high_water() == 2);
  CHECK(q.pop(0ms) == 2);
  CHECK(q.pop(0ms) == 3);
  CHECK_FALSE(q.pop(1ms));
  q.close();
  CHECK(q.drained());
}

TEST_CASE("a slow classifier causes logged drops, never unbounded queues") {
  testing::TempDir dir;
  const auto slow = [](const dsp::AudioChunk& c) {
    std::this_thread::sleep_for(60ms);
    return loudness_classifier(c);
  };
  Service svc(replay_config(dir.str(), "none"), live_options(scripted_audio(std::vector<bool>(30, true)), 0.0, slow));
  const auto id = svc.start_session();
  svc.wait_session();
  const auto summary = svc.stop_session(id);
  CHECK(svc.queue_high_water() <= 2);
  const std::uint64_t seen = summary.at("chunks_seen"), dropped = summary.at("chunks_dropped");
  CHECK(dropped > 0);
  CHECK(seen + dropped == 30);
  store::EventQuery q;
  q.session_id = id;
  q.kind = store::EventKind::Drop;
  CHECK(svc.events(q).size() == dropped);
}

TEST_CASE("service lifecycle") {
  testing::TempDir dir;
  ServiceConfig cfg = replay_config(dir.str(), "inproc");
  Service svc(cfg, live_options(scripted_audio(windows({true, true})), 50.0));
  CHECK_FALSE(svc.status().running);
  const auto id = svc.start_session();
  CHECK(svc.status().running);
  CHECK_THROWS_AS(svc.start_session(), ContractViolation);
  CHECK_THROWS_AS(svc.set_config(cfg), ContractViolation);
  CHECK_THROWS_AS(svc.stop_session("other"), NotFound);
  svc.wait_session();
  const auto summary = svc.stop_session(id);
  CHECK(summary.at("chunks_seen") == 20);
  CHECK(summary.at("triggers") == 1);
  CHECK(svc.stop_session(id) == summary);  // closed sessions answer with their summary
  CHECK_FALSE(svc.status().running);
  CHECK(svc.sessions().size() == 1);

  ServiceConfig bad = cfg;
  bad.vote_k = 0;
  CHECK_THROWS_AS(svc.set_config(bad), ConfigError);
  ServiceConfig broken = cfg;
  broken.device = "127.0.0.1:1";
  broken.device_timeout_ms = 200;
  svc.set_config(broken);
  CHECK_THROWS_AS(svc.start_session(), StartupError);
  CHECK(svc.sessions().size() == 1);
}

TEST_CASE("rest routes") {
  testing::TempDir dir;
  Service svc(replay_config(dir.str(), "none"), live_options(scripted_audio(windows({true, true, true})), 50.0));

  auto r = route_request(svc, "GET", "/status", "");
  CHECK(r.status == 200);
  CHECK(r.body.at("running") == false);
  CHECK(r.body.at("phase") == "idle");

  r = route_request(svc, "PUT", "/config", R"({"vote_k": 11})");
  CHECK(r.status == 422);
  CHECK(r.body.at("errors")[0].at("field") == "vote_k");
  CHECK(route_request(svc, "PUT", "/config", "{nope").status == 400);
  r = route_request(svc, "PUT", "/config", R"({"stimulus": "vibrate", "intensity": 40, "vote_k": 6})");
  CHECK(r.status == 200);
  CHECK(route_request(svc, "GET", "/config", "").body.at("vote_k") == 6);
  CHECK(svc.config().stimulus.intensity == 40);

  r = route_request(svc, "POST", "/session/start", "");
  REQUIRE(r.status == 201);
  const std::string id = r.body.at("session_id");
  CHECK(id.size() == 26);
  CHECK(route_request(svc, "POST", "/session/start", "").status == 409);
  CHECK(route_request(svc, "PUT", "/config", R"({"vote_k": 5})").status == 409);
  svc.wait_session();
  r = route_request(svc, "POST", "/session/" + id + "/stop", "");
  CHECK(r.status == 200);
  CHECK(r.body.at("summary").at("chunks_seen") == 30);
  CHECK(route_request(svc, "POST", "/session/nope/stop", "").status == 404);

  r = route_request(svc, "GET", "/sessions", "");
  REQUIRE(r.body.size() == 1);
  CHECK(r.body[0].at("session_id") == id);

  r = route_request(svc, "GET", "/events?session_id=" + id + "&kind=trigger", "");
  CHECK(r.status == 200);
  CHECK(r.body.size() == 1);
  r = route_request(svc, "GET", "/events?session_id=" + id, "");
  CHECK(r.body.size() == 31);
  // Bounds are inclusive at both ends.
  const std::int64_t lo = r.body[3].at("ts_ms"), hi = r.body[12].at("ts_ms");
  std::size_t expect = 0;
  for (const auto& e : r.body) expect += e.at("ts_ms") >= lo && e.at("ts_ms") <= hi;
  r = route_request(svc, "GET",
                    "/events?session_id=" + id + "&from_ms=" + std::to_string(lo) + "&to_ms=" + std::to_string(hi), "");
  CHECK(r.body.size() == expect);
  CHECK(expect >= 10);
  for (const auto& e : r.body) {
    for (const auto& [k, v] : e.items()) CHECK_FALSE(v.is_structured());
  }
  CHECK(route_request(svc, "GET", "/events", "").status == 400);
  CHECK(route_request(svc, "GET", "/events?session_id=" + id + "&kind=audio", "").status == 400);
  CHECK(route_request(svc, "GET", "/events?session_id=" + id + "&from_ms=soon", "").status == 400);
  CHECK(route_request(svc, "DELETE", "/status", "").status == 405);
  CHECK(route_request(svc, "GET", "/nowhere", "").status == 404);
}

TEST_CASE("http server and websocket stream") {
  testing::TempDir dir;
  Service svc(replay_config(dir.str(), "none"), live_options(scripted_audio(windows({true, true})), 20.0));
  HttpServer server(svc, "127.0.0.1:0");
  const int port = server.start();
  REQUIRE(port > 0);

  auto r = http_call(port, beast::http::verb::get, "/status");
  CHECK(r.status == 200);
  CHECK(r.body.at("running") == false);
  r = http_call(port, beast::http::verb::put, "/config", R"({"vote_k": 0})");
  CHECK(r.status == 422);

  asio::io_context ioc;
  beast::websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)));
  ws.handshake("127.0.0.1", "/stream");
  std::this_thread::sleep_for(100ms);  // let the server register the subscriber

  r = http_call(port, beast::http::verb::post, "/session/start");
  REQUIRE(r.status == 201);
  const std::string id = r.body.at("session_id");

  std::map<std::string, int> kinds;
  int received = 0;
  while (received < 21) {
    beast::flat_buffer buf;
    ws.read(buf);
    const auto msg = Json::parse(beast::buffers_to_string(buf.data()));
    CHECK(msg.at("session_id") == id);
    ++kinds[msg.at("kind").get<std::string>()];
    ++received;
  }
  CHECK(kinds["chunk_decision"] == 20);
  CHECK(kinds["trigger"] == 1);
  ws.close(beast::websocket::close_code::normal);

  svc.wait_session();
  r = http_call(port, beast::http::verb::post, "/session/" + id + "/stop");
  CHECK(r.status == 200);
  server.stop();
}

TEST_CASE("closed-loop calibration through the session runner") {
  testing::TempDir dir;
  ServiceConfig cfg = replay_config(dir.str(), "inproc");
  cfg.calibration.enabled = true;
  cfg.refractory_ms = 0;
  ManualClock clock(1'700'000'000'000);
  auto sim = std::make_shared<sim::DeviceSimulator>(sim::Scenario::responds_at(70));
  auto client = std::make_unique<device::DeviceClient>(
      std::make_unique<device::InProcessTransport>(sim, [&] { return clock.now_ms(); }));
  store::EventLog log(dir.path(), "calib");
  SessionRunner runner(cfg, "calib", std::move(client), log, clock);

  // Each cycle: one snoring window, then quiet windows until the observation
  // closes. The sleeper stops snoring iff it moved.
  std::uint64_t seq = 0;
  std::vector<int> intensities;
  for (int cycle = 0; cycle < 12; ++cycle) {
    const int sent = runner.calibration().current_intensity;
    for (int i = 0; i < 10; ++i, ++seq) {
      clock.advance(1000);
      runner.on_decision(detector::make_decision(seq, 0.9, -15.0));
    }
    for (int i = 0; i < 70; ++i, ++seq) {
      clock.advance(1000);
      runner.on_decision(detector::make_decision(seq, 0.1, -50.0));
    }
    intensities.push_back(runner.calibration().current_intensity);
    CHECK(runner.calibration().last_outcome ==
          (sent >= 70 ? actuator::Outcome::Success : actuator::Outcome::Failure));
  }
  CHECK(intensities[0] == 60);
  for (std::size_t i = 1; i < intensities.size(); ++i) CHECK((intensities[i] == 60 || intensities[i] == 70));
  CHECK(runner.counters().calibrations == 12);
  CHECK(sim->stats().nudges_delivered == 12);
}
