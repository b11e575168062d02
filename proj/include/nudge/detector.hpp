#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nudge/dsp.hpp"
#include "nudge/nnet.hpp"

namespace nudge::detector {

inline constexpr std::size_t kWindowSize = 10;
inline constexpr double kDefaultChunkThreshold = 0.5;

struct ChunkDecision {
  std::uint64_t seq_no = 0;
  double p_snore = 0.0;
  bool is_snore = false;
  double loudness_dbfs = dsp::kLoudnessFloorDbfs;
};

// is_snore = p_snore >= threshold; an exact tie counts as snore.
ChunkDecision make_decision(std::uint64_t seq_no, double p_snore, double loudness_dbfs,
                            double threshold = kDefaultChunkThreshold);

// Runs MFCC + forward on the chunk and attaches its loudness.
ChunkDecision classify_chunk(const nnet::SnoreModel& model, const dsp::AudioChunk& chunk,
                             double threshold = kDefaultChunkThreshold);

std::size_t count_votes(std::span<const ChunkDecision> window);

// trigger iff at least k of the ten decisions are positive. Throws
// ContractViolation when the window is not exactly ten decisions or k is
// outside 1..10.
bool vote(std::span<const ChunkDecision> window, std::size_t k = 7);

struct CycleConfig {
  std::size_t vote_k = 7;
  std::int64_t refractory_ms = 30000;
};

enum class Phase { Collecting, Refractory };

struct CycleState {
  Phase phase = Phase::Collecting;
  std::vector<ChunkDecision> collected;  // current tumbling window, 0..9 entries
  std::int64_t refractory_until_ms = 0;
  std::optional<std::uint64_t> last_seq_no;
};

struct TriggerEvent {
  std::uint64_t window_end_seq = 0;
  std::size_t vote_count = 0;
  double max_loudness_dbfs = dsp::kLoudnessFloorDbfs;
  std::int64_t ts_ms = 0;
};

struct WindowResult {
  std::uint64_t first_seq = 0;
  std::uint64_t last_seq = 0;
  std::size_t vote_count = 0;
  bool voted_trigger = false;  // vote result before refractory suppression
  bool suppressed = false;     // would have triggered but refractory held it back
};

struct StepResult {
  std::optional<WindowResult> window;
  std::optional<TriggerEvent> trigger;
};

// Tumbling-window detection cycle. Every ten decisions form one window that is
// voted on; a positive vote emits a TriggerEvent unless the cycle is still
// refractory from the previous one. Refractory ends once now_ms reaches
// refractory_until_ms.
class DetectionCycle {
 public:
  explicit DetectionCycle(CycleConfig cfg = {});

  // Decisions must arrive with consecutive seq_no; anything else throws
  // SequencingError and leaves the state untouched.
  StepResult step(const ChunkDecision& decision, std::int64_t now_ms);

  // A chunk lost upstream (queue overflow). It occupies its window slot as a
  // negative decision so windows keep their tumbling alignment.
  StepResult skip(std::uint64_t seq_no, std::int64_t now_ms);

  const CycleState& state() const noexcept { return state_; }
  const CycleConfig& config() const noexcept { return cfg_; }

  // Drops the partial window (session stop).
  void discard_partial() noexcept { state_.collected.clear(); }

 private:
  StepResult accept(const ChunkDecision& decision, std::int64_t now_ms);

  CycleConfig cfg_;
  CycleState state_;
};

}  // namespace nudge::detector
