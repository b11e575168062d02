#include "nudge/stimulus.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "nudge/errors.hpp"

namespace nudge::actuator {

const char* to_string(StimulusKind kind) {
  switch (kind) {
    case StimulusKind::Beep: return "beep";
    case StimulusKind::Vibrate: return "vibrate";
    case StimulusKind::Zap: return "zap";
  }
  return "unknown";
}

std::optional<StimulusKind> parse_stimulus_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "beep") return StimulusKind::Beep;
  if (lower == "vibrate") return StimulusKind::Vibrate;
  if (lower == "zap" || lower == "shock") return StimulusKind::Zap;
  return std::nullopt;
}

void validate(const StimulusPlan& plan) {
  if (plan.intensity < 0 || plan.intensity > 100) {
    throw ContractViolation("stimulus intensity must be in [0, 100]");
  }
  if (!(plan.quiet_threshold_dbfs >= -120.0 && plan.quiet_threshold_dbfs <= 0.0)) {
    throw ContractViolation("quiet_threshold_dbfs must be in [-120, 0]");
  }
}

Stimulus select_stimulus(const StimulusPlan& plan, double loudness_dbfs) {
  const int intensity = clamp_intensity(plan.intensity);
  if (!plan.escalation_enabled) return {plan.default_kind, intensity};
  return {loudness_dbfs < plan.quiet_threshold_dbfs ? plan.quiet_kind : plan.loud_kind, intensity};
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::None: return "none";
    case Outcome::Success: return "success";
    case Outcome::Failure: return "failure";
  }
  return "unknown";
}

CalibrationState make_calibration(int start_intensity, int step, int min_i, int max_i) {
  if (step <= 0) throw ContractViolation("calibration step must be positive");
  if (min_i < 0 || max_i > 100 || min_i > max_i) {
    throw ContractViolation("calibration bounds must satisfy 0 <= min <= max <= 100");
  }
  CalibrationState cal;
  cal.step = step;
  cal.min_i = min_i;
  cal.max_i = max_i;
  cal.current_intensity = std::clamp(start_intensity, min_i, max_i);
  return cal;
}

CalibrationState calibrate_update(CalibrationState cal, const NudgeOutcome& outcome) {
  const bool success = outcome.moved && outcome.snore_ceased;
  if (success) {
    cal.mns_candidate = cal.current_intensity;
    cal.current_intensity -= cal.step;
    cal.last_outcome = Outcome::Success;
  } else {
    cal.current_intensity += cal.step;
    cal.last_outcome = Outcome::Failure;
  }
  cal.current_intensity = std::clamp(cal.current_intensity, cal.min_i, cal.max_i);
  return cal;
}

}  // namespace nudge::actuator
