#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

// Append-only persistence of sessions and derived events. Events are scalar
// records only: the schema has no field that can hold a sample buffer or a
// feature matrix, and append rejects anything array- or object-valued.
//
// Layout under the log directory:
//   <session_id>/session.ndjson              start record, later an end record
//   <session_id>/events-YYYY-MM-DD.ndjson    one event per line, UTC day of ts_ms
namespace nudge::store {

enum class EventKind { ChunkDecision, Trigger, Nudge, Ack, Calibration, Drop };

const char* to_string(EventKind kind);
// Accepts the snake_case wire name or the CamelCase name.
std::optional<EventKind> parse_event_kind(std::string_view name);

struct EventRecord {
  std::int64_t ts_ms = 0;
  std::string session_id;
  EventKind kind = EventKind::ChunkDecision;
  std::optional<std::uint64_t> seq_no;
  std::optional<double> p_snore;
  std::optional<double> loudness_dbfs;
  std::optional<std::int64_t> vote_count;
  std::optional<std::string> stimulus;
  std::optional<std::int64_t> intensity;
  std::optional<std::string> outcome;

  bool operator==(const EventRecord&) const = default;
};

inline constexpr std::size_t kMaxRecordBytes = 4096;

nlohmann::json to_json(const EventRecord& e);
// Throws SchemaViolation unless the object matches the record schema exactly.
void validate_event_json(const nlohmann::json& j);
EventRecord event_from_json(const nlohmann::json& j);
// Single NDJSON line including the trailing newline.
std::string encode_event_line(const EventRecord& e);

// "YYYY-MM-DD" of the UTC day containing ts_ms.
std::string utc_day(std::int64_t ts_ms);

// Single writer for one session's events.
class EventLog {
 public:
  EventLog(std::filesystem::path log_dir, std::string session_id);
  ~EventLog();

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // One write(2) per record. Throws SchemaViolation (nothing written) or
  // PersistedStateError.
  void append(const EventRecord& event);
  void append_json(const nlohmann::json& event);

  const std::filesystem::path& session_dir() const noexcept { return dir_; }
  const std::string& session_id() const noexcept { return session_id_; }
  std::uint64_t appended() const noexcept { return appended_; }

 private:
  void write_line(std::int64_t ts_ms, const std::string& line);

  std::filesystem::path dir_;
  std::string session_id_;
  std::string open_day_;
  int fd_ = -1;
  std::uint64_t appended_ = 0;
};

struct ReadStats {
  std::size_t records = 0;
  std::size_t skipped_lines = 0;  // torn or corrupt lines
};

// Every event of the session in append order; an unknown session yields an
// empty list.
std::vector<EventRecord> read_events(const std::filesystem::path& log_dir,
                                     const std::string& session_id, ReadStats* stats = nullptr);

struct EventQuery {
  std::string session_id;
  std::optional<EventKind> kind;
  std::optional<std::int64_t> from_ms;  // inclusive
  std::optional<std::int64_t> to_ms;    // inclusive
};

// Filter plus stable sort by ts_ms.
std::vector<EventRecord> filter_events(std::span<const EventRecord> events, const EventQuery& q);
std::vector<EventRecord> query_events(const std::filesystem::path& log_dir, const EventQuery& q);

struct SessionRecord {
  std::string session_id;
  std::int64_t started_ms = 0;
  std::optional<std::int64_t> ended_ms;
  nlohmann::json config;  // immutable snapshot taken at start
  std::optional<nlohmann::json> summary;
};

nlohmann::json to_json(const SessionRecord& s);

class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path log_dir);

  // Creates the session directory and writes the start record. Throws
  // PersistedStateError if the session already exists.
  void open(const SessionRecord& record);
  // Appends the end record; ended_ms must not precede started_ms.
  void close(const std::string& session_id, std::int64_t ended_ms, const nlohmann::json& summary);

  std::optional<SessionRecord> get(const std::string& session_id) const;
  // All sessions sorted by id (time order for ULIDs).
  std::vector<SessionRecord> list() const;

  const std::filesystem::path& log_dir() const noexcept { return log_dir_; }

 private:
  std::filesystem::path log_dir_;
};

}  // namespace nudge::store
