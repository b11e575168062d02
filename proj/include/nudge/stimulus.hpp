#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace nudge::actuator {

enum class StimulusKind : std::uint8_t { Beep = 0, Vibrate = 1, Zap = 2 };

const char* to_string(StimulusKind kind);
// Accepts "beep", "vibrate", "zap" (and "shock" as an alias for zap), any case.
std::optional<StimulusKind> parse_stimulus_kind(std::string_view name);

struct StimulusPlan {
  StimulusKind default_kind = StimulusKind::Vibrate;
  int intensity = 50;  // percent
  bool escalation_enabled = false;
  double quiet_threshold_dbfs = -30.0;
  StimulusKind quiet_kind = StimulusKind::Vibrate;
  StimulusKind loud_kind = StimulusKind::Zap;

  bool operator==(const StimulusPlan&) const = default;
};

// Throws ContractViolation if intensity or the threshold is out of range.
void validate(const StimulusPlan& plan);

struct Stimulus {
  StimulusKind kind = StimulusKind::Vibrate;
  int intensity = 0;
  bool operator==(const Stimulus&) const = default;
};

// With escalation: quieter than the threshold gets quiet_kind, anything at or
// above it gets loud_kind. Without escalation: default_kind.
Stimulus select_stimulus(const StimulusPlan& plan, double loudness_dbfs);

inline int clamp_intensity(int intensity) {
  return intensity < 0 ? 0 : (intensity > 100 ? 100 : intensity);
}

enum class Outcome { None, Success, Failure };
const char* to_string(Outcome outcome);

// Minimum-necessary-stimulus search state.
struct CalibrationState {
  int current_intensity = 50;
  int step = 10;
  int min_i = 10;
  int max_i = 100;
  Outcome last_outcome = Outcome::None;
  std::optional<int> mns_candidate;  // last intensity that produced a Success

  bool operator==(const CalibrationState&) const = default;
};

// What was observed after one nudge.
struct NudgeOutcome {
  bool moved = false;         // accelerometer movement inside the move window
  bool snore_ceased = false;  // no triggering window inside the cessation window
};

CalibrationState make_calibration(int start_intensity, int step = 10, int min_i = 10,
                                  int max_i = 100);

// Success (moved and ceased) steps the intensity down, anything else steps it
// up; the result is always clamped to [min_i, max_i].
CalibrationState calibrate_update(CalibrationState cal, const NudgeOutcome& outcome);

}  // namespace nudge::actuator
