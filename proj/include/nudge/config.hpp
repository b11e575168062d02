#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nudge/errors.hpp"
#include "nudge/stimulus.hpp"

namespace nudge::service {

struct CalibrationConfig {
  bool enabled = false;
  int step = 10;
  int min_intensity = 10;
  int max_intensity = 100;
  std::int64_t move_window_ms = 15000;
  std::int64_t cease_window_ms = 60000;
  bool operator==(const CalibrationConfig&) const = default;
};

// Field names match the JSON config file one to one.
struct ServiceConfig {
  std::string model_path;
  // "none" (dry run), "host:port" (TCP device), "inproc" or "inproc:<scenario.json>"
  std::string device = "none";
  actuator::StimulusPlan stimulus;
  int vote_k = 7;
  double chunk_threshold = 0.5;
  std::int64_t refractory_ms = 30000;
  std::string log_dir = "nudge-logs";
  std::string listen_addr = "127.0.0.1:8080";
  // "stdin" (s16le mono 16 kHz), "pcm:<path>", "wav:<path>" (played in real time)
  std::string capture = "stdin";
  CalibrationConfig calibration;
  std::int64_t device_timeout_ms = 2000;
  std::uint64_t seed = 0;

  bool dry_run() const { return device.empty() || device == "none"; }
  bool operator==(const ServiceConfig&) const = default;
};

std::vector<FieldError> check(const ServiceConfig& cfg);
// Throws ConfigError listing every violation.
void validate(const ServiceConfig& cfg);

nlohmann::json to_json(const ServiceConfig& cfg);

// Overlays the fields present in `j` onto `base`. Unknown fields and wrong
// types are reported as field errors; range checks are left to validate().
// "stimulus" may also be a bare kind string, with "intensity" at top level.
ServiceConfig merge_config(const nlohmann::json& j, const ServiceConfig& base = {});

ServiceConfig load_config(const std::filesystem::path& path);

}  // namespace nudge::service
