#include <doctest.h>

#include <fstream>

#include <openssl/evp.h>

#include "support.hpp"
#include "nudge/errors.hpp"
#include "nudge/store.hpp"

using namespace nudge;
using namespace nudge::store;
using Json = nlohmann::json;

namespace {

constexpr std::int64_t kDay = 86400000;
constexpr std::int64_t kT0 = 1'700'000'000'000;  // 2023-11-14 22:13:20 UTC

EventRecord decision(const std::string& sid, std::int64_t ts, std::uint64_t seq) {
  EventRecord e;
  e.ts_ms = ts;
  e.session_id = sid;
  e.kind = EventKind::ChunkDecision;
  e.seq_no = seq;
  e.p_snore = 0.125 * static_cast<double>(seq % 8);
  e.loudness_dbfs = -40.5;
  return e;
}

std::string sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  return std::string(reinterpret_cast<char*>(md), len);
}

}  // namespace

TEST_CASE("event kinds have snake_case wire names") {
  CHECK(std::string(to_string(EventKind::ChunkDecision)) == "chunk_decision");
  CHECK(parse_event_kind("ChunkDecision") == EventKind::ChunkDecision);
  for (auto k : {EventKind::ChunkDecision, EventKind::Trigger, EventKind::Nudge, EventKind::Ack,
                 EventKind::Calibration, EventKind::Drop}) {
    CHECK(parse_event_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_event_kind("audio"));
}

TEST_CASE("schema rejects anything but flat known scalars") {
  const Json ok = to_json(decision("s1", kT0, 3));
  CHECK_NOTHROW(validate_event_json(ok));

  auto arr = ok;
  arr["p_snore"] = Json::array({0.1, 0.2});
  CHECK_THROWS_AS(validate_event_json(arr), SchemaViolation);
  auto samples = ok;
  samples["samples"] = std::vector<double>(16000, 0.0);
  CHECK_THROWS_AS(validate_event_json(samples), SchemaViolation);
  auto obj = ok;
  obj["outcome"] = Json::object({{"a", 1}});
  CHECK_THROWS_AS(validate_event_json(obj), SchemaViolation);
  auto unknown = ok;
  unknown["mfcc_0"] = 1.0;
  CHECK_THROWS_AS(validate_event_json(unknown), SchemaViolation);
  auto wrong = ok;
  wrong["seq_no"] = "three";
  CHECK_THROWS_AS(validate_event_json(wrong), SchemaViolation);
  auto missing = ok;
  missing.erase("ts_ms");
  CHECK_THROWS_AS(validate_event_json(missing), SchemaViolation);
  auto kind = ok;
  kind["kind"] = "waveform";
  CHECK_THROWS_AS(validate_event_json(kind), SchemaViolation);

  CHECK(event_from_json(ok) == decision("s1", kT0, 3));
}

TEST_CASE("append refuses array payloads and writes nothing") {
  testing::TempDir dir;
  EventLog log(dir.path(), "s1");
  auto bad = to_json(decision("s1", kT0, 0));
  bad["loudness_dbfs"] = Json::array({-1, -2});
  CHECK_THROWS_AS(log.append_json(bad), SchemaViolation);
  auto other = to_json(decision("s2", kT0, 0));
  CHECK_THROWS_AS(log.append_json(other), SchemaViolation);
  EventRecord huge = decision("s1", kT0, 0);
  huge.outcome = std::string(5000, 'x');
  CHECK_THROWS_AS(log.append(huge), SchemaViolation);
  CHECK(log.appended() == 0);
  CHECK(read_events(dir.path(), "s1").empty());
  CHECK_THROWS_AS(EventLog(dir.path(), "../escape"), SchemaViolation);
}

TEST_CASE("10k appends read back in order, and earlier bytes never change") {
  testing::TempDir dir;
  EventLog log(dir.path(), "s1");
  const auto file = dir.path() / "s1" / ("events-" + utc_day(kT0) + ".ndjson");
  std::vector<std::pair<std::size_t, std::string>> checkpoints;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    log.append(decision("s1", kT0 + static_cast<std::int64_t>(i), i));
    if (i % 1000 == 999) {
      const auto bytes = testing::read_file(file);
      checkpoints.emplace_back(bytes.size(), sha256(bytes));
    }
  }
  const auto final_bytes = testing::read_file(file);
  for (const auto& [size, hash] : checkpoints) CHECK(sha256(final_bytes.substr(0, size)) == hash);

  ReadStats stats;
  const auto events = read_events(dir.path(), "s1", &stats);
  REQUIRE(events.size() == 10000);
  CHECK(stats.skipped_lines == 0);
  for (std::uint64_t i = 0; i < 10000; ++i) CHECK(events[i] == decision("s1", kT0 + static_cast<std::int64_t>(i), i));
}

TEST_CASE("events roll over by UTC day") {
  CHECK(utc_day(0) == "1970-01-01");
  CHECK(utc_day(kDay - 1) == "1970-01-01");
  CHECK(utc_day(kT0) == "2023-11-14");
  CHECK(utc_day(-1) == "1969-12-31");

  testing::TempDir dir;
  {
    EventLog log(dir.path(), "s1");
    log.append(decision("s1", kT0, 0));
    log.append(decision("s1", kT0 + kDay, 1));
    log.append(decision("s1", kT0 + 2 * kDay, 2));
  }
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path() / "s1")) {
    files += e.path().filename().string().rfind("events-", 0) == 0;
  }
  CHECK(files == 3);
  const auto back = read_events(dir.path(), "s1");
  REQUIRE(back.size() == 3);
  CHECK(back[2].seq_no == 2u);
}

TEST_CASE("a torn final line is skipped and the next writer starts clean") {
  testing::TempDir dir;
  {
    EventLog log(dir.path(), "s1");
    log.append(decision("s1", kT0, 0));
    log.append(decision("s1", kT0 + 1, 1));
  }
  const auto file = dir.path() / "s1" / ("events-" + utc_day(kT0) + ".ndjson");
  {
    std::ofstream out(file, std::ios::app | std::ios::binary);
    out << R"({"ts_ms":1700000000002,"session_id":"s1","ki)";
  }
  ReadStats stats;
  CHECK(read_events(dir.path(), "s1", &stats).size() == 2);
  CHECK(stats.skipped_lines == 1);
  {
    EventLog log(dir.path(), "s1");
    log.append(decision("s1", kT0 + 3, 3));
  }
  const auto back = read_events(dir.path(), "s1", &stats);
  REQUIRE(back.size() == 3);
  CHECK(back[2].seq_no == 3u);
  CHECK(stats.skipped_lines == 1);
}

TEST_CASE("queries filter inclusively and sort by time") {
  std::vector<EventRecord> ev;
  for (std::uint64_t i = 0; i < 10; ++i) ev.push_back(decision("s1", kT0 + static_cast<std::int64_t>((i * 7) % 10) * 1000, i));
  ev[4].kind = EventKind::Trigger;
  ev[5].kind = EventKind::Trigger;

  EventQuery q;
  q.session_id = "s1";
  q.from_ms = kT0 + 2000;
  q.to_ms = kT0 + 5000;
  const auto r = filter_events(ev, q);
  REQUIRE(r.size() == 4);
  CHECK(r.front().ts_ms == kT0 + 2000);
  CHECK(r.back().ts_ms == kT0 + 5000);
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].ts_ms <= r[i].ts_ms);

  q = {};
  q.session_id = "s1";
  q.kind = EventKind::Trigger;
  CHECK(filter_events(ev, q).size() == 2);

  testing::TempDir dir;
  {
    EventLog log(dir.path(), "s1");
    for (const auto& e : ev) log.append(e);
  }
  CHECK(query_events(dir.path(), q).size() == 2);
  q.session_id = "nope";
  CHECK(query_events(dir.path(), q).empty());
}

TEST_CASE("session store lifecycle") {
  testing::TempDir dir;
  SessionStore store(dir.path());
  SessionRecord rec;
  rec.session_id = "01B";
  rec.started_ms = kT0;
  rec.config = Json{{"vote_k", 7}};
  store.open(rec);
  CHECK_THROWS_AS(store.open(rec), PersistedStateError);

  auto got = store.get("01B");
  REQUIRE(got);
  CHECK_FALSE(got->ended_ms);
  CHECK(got->config == rec.config);

  rec.session_id = "01A";
  store.open(rec);
  store.close("01B", kT0 + 5000, Json{{"triggers", 2}});
  CHECK_THROWS_AS(store.close("01B", kT0 + 6000, Json::object()), PersistedStateError);
  CHECK_THROWS_AS(store.close("zzz", kT0, Json::object()), NotFound);

  got = store.get("01B");
  CHECK(got->ended_ms == kT0 + 5000);
  CHECK(got->summary->at("triggers") == 2);
  const auto all = store.list();
  REQUIRE(all.size() == 2);
  CHECK(all[0].session_id == "01A");
  CHECK_FALSE(store.get("missing"));
}
