#include "nudge/config.hpp"

#include <fstream>
#include <set>

namespace nudge::service {

using Json = nlohmann::json;

namespace {

class Reader {
 public:
  explicit Reader(std::vector<FieldError>& errors) : errors_(errors) {}

  template <typename T>
  void read(const Json& obj, const std::string& key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const Json::exception&) {
      errors_.push_back({path, "wrong type"});
    }
  }

  void kind(const Json& obj, const std::string& key, const std::string& path,
            actuator::StimulusKind& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (!v.is_string()) {
      errors_.push_back({path, "must be one of beep, vibrate, zap"});
      return;
    }
    if (auto k = actuator::parse_stimulus_kind(v.get<std::string>())) {
      out = *k;
    } else {
      errors_.push_back({path, "unknown stimulus kind '" + v.get<std::string>() + "'"});
    }
  }

  void unknown_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [key, _] : obj.items()) {
      if (!allowed.count(key)) errors_.push_back({prefix + key, "unknown field"});
    }
  }

 private:
  std::vector<FieldError>& errors_;
};

}  // namespace

std::vector<FieldError> check(const ServiceConfig& cfg) {
  std::vector<FieldError> e;
  if (cfg.vote_k < 1 || cfg.vote_k > 10) e.push_back({"vote_k", "must be in 1..10"});
  if (!(cfg.chunk_threshold > 0.0 && cfg.chunk_threshold < 1.0)) {
    e.push_back({"chunk_threshold", "must be in (0, 1)"});
  }
  if (cfg.refractory_ms < 0) e.push_back({"refractory_ms", "must be non-negative"});
  if (cfg.stimulus.intensity < 0 || cfg.stimulus.intensity > 100) {
    e.push_back({"stimulus.intensity", "must be in [0, 100]"});
  }
  if (!(cfg.stimulus.quiet_threshold_dbfs >= -120.0 && cfg.stimulus.quiet_threshold_dbfs <= 0.0)) {
    e.push_back({"stimulus.quiet_threshold_dbfs", "must be in [-120, 0]"});
  }
  if (cfg.log_dir.empty()) e.push_back({"log_dir", "must not be empty"});
  if (cfg.device_timeout_ms <= 0) e.push_back({"device_timeout_ms", "must be positive"});
  const auto& c = cfg.calibration;
  if (c.step <= 0) e.push_back({"calibration.step", "must be positive"});
  if (c.min_intensity < 0 || c.min_intensity > 100) {
    e.push_back({"calibration.min_intensity", "must be in [0, 100]"});
  }
  if (c.max_intensity < 0 || c.max_intensity > 100 || c.max_intensity < c.min_intensity) {
    e.push_back({"calibration.max_intensity", "must be in [min_intensity, 100]"});
  }
  if (c.move_window_ms <= 0) e.push_back({"calibration.move_window_ms", "must be positive"});
  if (c.cease_window_ms <= 0) e.push_back({"calibration.cease_window_ms", "must be positive"});
  return e;
}

void validate(const ServiceConfig& cfg) {
  auto errors = check(cfg);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

Json to_json(const ServiceConfig& cfg) {
  const auto& s = cfg.stimulus;
  const auto& c = cfg.calibration;
  return {
      {"model_path", cfg.model_path},
      {"device", cfg.device},
      {"stimulus",
       {{"default_kind", actuator::to_string(s.default_kind)},
        {"intensity", s.intensity},
        {"escalation_enabled", s.escalation_enabled},
        {"quiet_threshold_dbfs", s.quiet_threshold_dbfs},
        {"quiet_kind", actuator::to_string(s.quiet_kind)},
        {"loud_kind", actuator::to_string(s.loud_kind)}}},
      {"vote_k", cfg.vote_k},
      {"chunk_threshold", cfg.chunk_threshold},
      {"refractory_ms", cfg.refractory_ms},
      {"log_dir", cfg.log_dir},
      {"listen_addr", cfg.listen_addr},
      {"capture", cfg.capture},
      {"calibration",
       {{"enabled", c.enabled},
        {"step", c.step},
        {"min_intensity", c.min_intensity},
        {"max_intensity", c.max_intensity},
        {"move_window_ms", c.move_window_ms},
        {"cease_window_ms", c.cease_window_ms}}},
      {"device_timeout_ms", cfg.device_timeout_ms},
      {"seed", cfg.seed},
  };
}

ServiceConfig merge_config(const Json& j, const ServiceConfig& base) {
  std::vector<FieldError> errors;
  if (!j.is_object()) throw ConfigError(std::vector<FieldError>{{"", "configuration must be a JSON object"}});
  ServiceConfig cfg = base;
  Reader r(errors);
  r.unknown_keys(j,
                 {"model_path", "device", "stimulus", "intensity", "vote_k", "chunk_threshold",
                  "refractory_ms", "log_dir", "listen_addr", "capture", "calibration",
                  "device_timeout_ms", "seed"},
                 "");
  r.read(j, "model_path", "model_path", cfg.model_path);
  if (j.contains("device") && j.at("device").is_null()) {
    cfg.device = "none";
  } else {
    r.read(j, "device", "device", cfg.device);
  }
  if (j.contains("stimulus")) {
    const Json& s = j.at("stimulus");
    if (s.is_string()) {
      r.kind(j, "stimulus", "stimulus", cfg.stimulus.default_kind);
    } else if (s.is_object()) {
      r.unknown_keys(s,
                     {"default_kind", "intensity", "escalation_enabled", "quiet_threshold_dbfs",
                      "quiet_kind", "loud_kind"},
                     "stimulus.");
      r.kind(s, "default_kind", "stimulus.default_kind", cfg.stimulus.default_kind);
      r.read(s, "intensity", "stimulus.intensity", cfg.stimulus.intensity);
      r.read(s, "escalation_enabled", "stimulus.escalation_enabled", cfg.stimulus.escalation_enabled);
      r.read(s, "quiet_threshold_dbfs", "stimulus.quiet_threshold_dbfs",
             cfg.stimulus.quiet_threshold_dbfs);
      r.kind(s, "quiet_kind", "stimulus.quiet_kind", cfg.stimulus.quiet_kind);
      r.kind(s, "loud_kind", "stimulus.loud_kind", cfg.stimulus.loud_kind);
    } else {
      errors.push_back({"stimulus", "must be an object or a stimulus kind"});
    }
  }
  r.read(j, "intensity", "stimulus.intensity", cfg.stimulus.intensity);
  r.read(j, "vote_k", "vote_k", cfg.vote_k);
  r.read(j, "chunk_threshold", "chunk_threshold", cfg.chunk_threshold);
  r.read(j, "refractory_ms", "refractory_ms", cfg.refractory_ms);
  r.read(j, "log_dir", "log_dir", cfg.log_dir);
  r.read(j, "listen_addr", "listen_addr", cfg.listen_addr);
  r.read(j, "capture", "capture", cfg.capture);
  r.read(j, "device_timeout_ms", "device_timeout_ms", cfg.device_timeout_ms);
  r.read(j, "seed", "seed", cfg.seed);
  if (j.contains("calibration")) {
    const Json& c = j.at("calibration");
    if (!c.is_object()) {
      errors.push_back({"calibration", "must be an object"});
    } else {
      r.unknown_keys(c,
                     {"enabled", "step", "min_intensity", "max_intensity", "move_window_ms",
                      "cease_window_ms"},
                     "calibration.");
      r.read(c, "enabled", "calibration.enabled", cfg.calibration.enabled);
      r.read(c, "step", "calibration.step", cfg.calibration.step);
      r.read(c, "min_intensity", "calibration.min_intensity", cfg.calibration.min_intensity);
      r.read(c, "max_intensity", "calibration.max_intensity", cfg.calibration.max_intensity);
      r.read(c, "move_window_ms", "calibration.move_window_ms", cfg.calibration.move_window_ms);
      r.read(c, "cease_window_ms", "calibration.cease_window_ms", cfg.calibration.cease_window_ms);
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  ServiceConfig cfg = merge_config(j);
  validate(cfg);
  return cfg;
}

}  // namespace nudge::service
