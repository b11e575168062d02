#include "nudge/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nudge/errors.hpp"

namespace nudge::store {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

namespace {

constexpr const char* kSessionFile = "session.ndjson";

struct KindName {
  EventKind kind;
  const char* wire;
  const char* camel;
};
constexpr KindName kKinds[] = {
    {EventKind::ChunkDecision, "chunk_decision", "ChunkDecision"},
    {EventKind::Trigger, "trigger", "Trigger"},
    {EventKind::Nudge, "nudge", "Nudge"},
    {EventKind::Ack, "ack", "Ack"},
    {EventKind::Calibration, "calibration", "Calibration"},
    {EventKind::Drop, "drop", "Drop"},
};

enum class FieldType { Int, UInt, Number, String };
struct FieldSpec {
  const char* name;
  FieldType type;
  bool required;
};
constexpr FieldSpec kFields[] = {
    {"ts_ms", FieldType::Int, true},          {"session_id", FieldType::String, true},
    {"kind", FieldType::String, true},        {"seq_no", FieldType::UInt, false},
    {"p_snore", FieldType::Number, false},    {"loudness_dbfs", FieldType::Number, false},
    {"vote_count", FieldType::Int, false},    {"stimulus", FieldType::String, false},
    {"intensity", FieldType::Int, false},     {"outcome", FieldType::String, false},
};

bool type_ok(const Json& v, FieldType t) {
  switch (t) {
    case FieldType::Int: return v.is_number_integer();
    case FieldType::UInt: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case FieldType::Number: return v.is_number() && std::isfinite(v.get<double>());
    case FieldType::String: return v.is_string();
  }
  return false;
}

// Days since 1970-01-01 to a civil date (proleptic Gregorian).
void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yoe + era * 400 + (m <= 2 ? 1 : 0));
}

std::vector<std::string> read_lines(const fs::path& path, bool& torn_tail) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      torn_tail = true;
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

void check_session_id(const std::string& id) {
  if (id.empty() || id.size() > 64 ||
      !std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_';
      })) {
    throw SchemaViolation("session_id '" + id + "' is not a plain identifier");
  }
}

}  // namespace

const char* to_string(EventKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k.wire;
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (name == k.wire || name == k.camel) return k.kind;
  }
  return std::nullopt;
}

Json to_json(const EventRecord& e) {
  Json j = {{"ts_ms", e.ts_ms}, {"session_id", e.session_id}, {"kind", to_string(e.kind)}};
  if (e.seq_no) j["seq_no"] = *e.seq_no;
  if (e.p_snore) j["p_snore"] = *e.p_snore;
  if (e.loudness_dbfs) j["loudness_dbfs"] = *e.loudness_dbfs;
  if (e.vote_count) j["vote_count"] = *e.vote_count;
  if (e.stimulus) j["stimulus"] = *e.stimulus;
  if (e.intensity) j["intensity"] = *e.intensity;
  if (e.outcome) j["outcome"] = *e.outcome;
  return j;
}

void validate_event_json(const Json& j) {
  if (!j.is_object()) throw SchemaViolation("event must be an object");
  for (const auto& [key, value] : j.items()) {
    if (value.is_array() || value.is_object()) {
      throw SchemaViolation("field '" + key + "' is array-valued; events hold scalars only");
    }
    const auto* spec = std::find_if(std::begin(kFields), std::end(kFields),
                                    [&](const FieldSpec& f) { return key == f.name; });
    if (spec == std::end(kFields)) throw SchemaViolation("unknown event field '" + key + "'");
    if (!type_ok(value, spec->type)) throw SchemaViolation("field '" + key + "' has the wrong type");
  }
  for (const auto& f : kFields) {
    if (f.required && !j.contains(f.name)) {
      throw SchemaViolation(std::string("missing required field '") + f.name + "'");
    }
  }
  if (!parse_event_kind(j.at("kind").get<std::string>())) {
    throw SchemaViolation("unknown event kind '" + j.at("kind").get<std::string>() + "'");
  }
}

EventRecord event_from_json(const Json& j) {
  validate_event_json(j);
  EventRecord e;
  e.ts_ms = j.at("ts_ms").get<std::int64_t>();
  e.session_id = j.at("session_id").get<std::string>();
  e.kind = *parse_event_kind(j.at("kind").get<std::string>());
  if (j.contains("seq_no")) e.seq_no = j.at("seq_no").get<std::uint64_t>();
  if (j.contains("p_snore")) e.p_snore = j.at("p_snore").get<double>();
  if (j.contains("loudness_dbfs")) e.loudness_dbfs = j.at("loudness_dbfs").get<double>();
  if (j.contains("vote_count")) e.vote_count = j.at("vote_count").get<std::int64_t>();
  if (j.contains("stimulus")) e.stimulus = j.at("stimulus").get<std::string>();
  if (j.contains("intensity")) e.intensity = j.at("intensity").get<std::int64_t>();
  if (j.contains("outcome")) e.outcome = j.at("outcome").get<std::string>();
  return e;
}

std::string encode_event_line(const EventRecord& e) {
  // Field order follows the schema table so lines are easy to eyeball.
  const Json j = to_json(e);
  OrderedJson o;
  for (const auto& f : kFields) {
    if (j.contains(f.name)) o[f.name] = j.at(f.name);
  }
  return o.dump() + "\n";
}

std::string utc_day(std::int64_t ts_ms) {
  const std::int64_t days = ts_ms >= 0 ? ts_ms / 86400000 : -((-ts_ms + 86399999) / 86400000);
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
  return buf;
}

EventLog::EventLog(fs::path log_dir, std::string session_id)
    : dir_(std::move(log_dir) / session_id), session_id_(std::move(session_id)) {
  check_session_id(session_id_);
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw PersistedStateError("cannot create " + dir_.string() + ": " + ec.message());
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const EventRecord& event) {
  if (event.session_id != session_id_) {
    throw SchemaViolation("event for session " + event.session_id + " appended to " + session_id_);
  }
  append_json(to_json(event));
}

void EventLog::append_json(const Json& event) {
  const EventRecord record = event_from_json(event);
  if (record.session_id != session_id_) {
    throw SchemaViolation("event for session " + record.session_id + " appended to " + session_id_);
  }
  const std::string line = encode_event_line(record);
  if (line.size() > kMaxRecordBytes) throw SchemaViolation("event record exceeds 4 KB");
  write_line(record.ts_ms, line);
  ++appended_;
}

void EventLog::write_line(std::int64_t ts_ms, const std::string& line) {
  const std::string day = utc_day(ts_ms);
  if (fd_ < 0 || day != open_day_) {
    if (fd_ >= 0) ::close(fd_);
    const fs::path path = dir_ / ("events-" + day + ".ndjson");
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw PersistedStateError("cannot open " + path.string() + ": " + std::strerror(errno));
    }
    open_day_ = day;
    // A previous writer may have died mid-line; terminate that fragment so the
    // next record starts on a fresh line. Existing bytes are never rewritten.
    struct stat st {};
    if (::fstat(fd_, &st) == 0 && st.st_size > 0) {
      char last = '\n';
      const int rfd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
      if (rfd >= 0) {
        if (::pread(rfd, &last, 1, st.st_size - 1) != 1) last = '\n';
        ::close(rfd);
      }
      if (last != '\n' && ::write(fd_, "\n", 1) != 1) {
        throw PersistedStateError("cannot terminate torn record in " + path.string());
      }
    }
  }
  const ssize_t n = ::write(fd_, line.data(), line.size());
  if (n != static_cast<ssize_t>(line.size())) {
    throw PersistedStateError("short write to event log: " +
                              std::string(n < 0 ? std::strerror(errno) : "partial record"));
  }
}

std::vector<EventRecord> read_events(const fs::path& log_dir, const std::string& session_id,
                                     ReadStats* stats) {
  std::vector<EventRecord> out;
  ReadStats local;
  const fs::path dir = log_dir / session_id;
  std::error_code ec;
  if (session_id.empty() || !fs::is_directory(dir, ec)) {
    if (stats) *stats = local;
    return out;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("events-", 0) == 0 && entry.path().extension() == ".ndjson") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    bool torn = false;
    for (const auto& line : read_lines(file, torn)) {
      if (line.empty()) continue;
      try {
        out.push_back(event_from_json(Json::parse(line)));
      } catch (const std::exception&) {
        ++local.skipped_lines;
      }
    }
  }
  local.records = out.size();
  if (stats) *stats = local;
  return out;
}

std::vector<EventRecord> filter_events(std::span<const EventRecord> events, const EventQuery& q) {
  std::vector<EventRecord> out;
  if (q.from_ms && q.to_ms && *q.from_ms > *q.to_ms) return out;
  for (const auto& e : events) {
    if (!q.session_id.empty() && e.session_id != q.session_id) continue;
    if (q.kind && e.kind != *q.kind) continue;
    if (q.from_ms && e.ts_ms < *q.from_ms) continue;
    if (q.to_ms && e.ts_ms > *q.to_ms) continue;
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.ts_ms < b.ts_ms; });
  return out;
}

std::vector<EventRecord> query_events(const fs::path& log_dir, const EventQuery& q) {
  if (q.session_id.empty()) return {};
  const auto events = read_events(log_dir, q.session_id);
  return filter_events(events, q);
}

Json to_json(const SessionRecord& s) {
  Json j = {{"session_id", s.session_id}, {"started_ms", s.started_ms}, {"config", s.config}};
  j["ended_ms"] = s.ended_ms ? Json(*s.ended_ms) : Json(nullptr);
  j["summary"] = s.summary ? *s.summary : Json(nullptr);
  return j;
}

SessionStore::SessionStore(fs::path log_dir) : log_dir_(std::move(log_dir)) {}

void SessionStore::open(const SessionRecord& record) {
  check_session_id(record.session_id);
  const fs::path dir = log_dir_ / record.session_id;
  const fs::path file = dir / kSessionFile;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PersistedStateError("cannot create " + dir.string() + ": " + ec.message());
  if (fs::exists(file)) throw PersistedStateError("session " + record.session_id + " already exists");
  std::ofstream out(file, std::ios::binary | std::ios::app);
  OrderedJson line = {{"record", "start"},
                      {"session_id", record.session_id},
                      {"started_ms", record.started_ms}};
  line["config"] = OrderedJson::parse(record.config.dump());
  out << line.dump() << '\n';
  if (!out.flush()) throw PersistedStateError("cannot write " + file.string());
}

void SessionStore::close(const std::string& session_id, std::int64_t ended_ms,
                         const Json& summary) {
  const auto existing = get(session_id);
  if (!existing) throw NotFound("unknown session " + session_id);
  if (existing->ended_ms) throw PersistedStateError("session " + session_id + " already closed");
  if (ended_ms < existing->started_ms) ended_ms = existing->started_ms;
  std::ofstream out(log_dir_ / session_id / kSessionFile, std::ios::binary | std::ios::app);
  OrderedJson line = {{"record", "end"}, {"session_id", session_id}, {"ended_ms", ended_ms}};
  line["summary"] = OrderedJson::parse(summary.dump());
  out << line.dump() << '\n';
  if (!out.flush()) throw PersistedStateError("cannot close session " + session_id);
}

std::optional<SessionRecord> SessionStore::get(const std::string& session_id) const {
  const fs::path file = log_dir_ / session_id / kSessionFile;
  std::error_code ec;
  if (session_id.empty() || !fs::is_regular_file(file, ec)) return std::nullopt;
  bool torn = false;
  std::optional<SessionRecord> rec;
  for (const auto& line : read_lines(file, torn)) {
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error&) {
      continue;
    }
    const std::string kind = j.value("record", std::string());
    if (kind == "start") {
      rec = SessionRecord{j.at("session_id").get<std::string>(), j.at("started_ms").get<std::int64_t>(),
                          std::nullopt, j.at("config"), std::nullopt};
    } else if (kind == "end" && rec) {
      rec->ended_ms = j.at("ended_ms").get<std::int64_t>();
      rec->summary = j.at("summary");
    }
  }
  return rec;
}

std::vector<SessionRecord> SessionStore::list() const {
  std::vector<SessionRecord> out;
  std::error_code ec;
  if (!fs::is_directory(log_dir_, ec)) return out;
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(log_dir_, ec)) {
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    if (auto rec = get(id)) out.push_back(std::move(*rec));
  }
  return out;
}

}  // namespace nudge::store
