#include "nudge/detector.hpp"

#include <algorithm>
#include <string>

#include "nudge/errors.hpp"

namespace nudge::detector {

ChunkDecision make_decision(std::uint64_t seq_no, double p_snore, double loudness_dbfs,
                            double threshold) {
  return ChunkDecision{seq_no, p_snore, p_snore >= threshold, loudness_dbfs};
}

ChunkDecision classify_chunk(const nnet::SnoreModel& model, const dsp::AudioChunk& chunk,
                             double threshold) {
  const auto features = dsp::compute_mfcc(chunk);
  const nnet::Probs p = nnet::forward(model, features);
  return make_decision(chunk.seq_no, p.snore, dsp::compute_loudness(chunk), threshold);
}

std::size_t count_votes(std::span<const ChunkDecision> window) {
  return static_cast<std::size_t>(
      std::count_if(window.begin(), window.end(), [](const auto& d) { return d.is_snore; }));
}

bool vote(std::span<const ChunkDecision> window, std::size_t k) {
  if (window.size() != kWindowSize) {
    throw ContractViolation("vote needs exactly 10 decisions, got " +
                            std::to_string(window.size()));
  }
  if (k < 1 || k > kWindowSize) throw ContractViolation("vote threshold must be in 1..10");
  return count_votes(window) >= k;
}

DetectionCycle::DetectionCycle(CycleConfig cfg) : cfg_(cfg) {
  if (cfg_.vote_k < 1 || cfg_.vote_k > kWindowSize) {
    throw ContractViolation("vote threshold must be in 1..10");
  }
  if (cfg_.refractory_ms < 0) throw ContractViolation("refractory_ms must be non-negative");
  state_.collected.reserve(kWindowSize);
}

StepResult DetectionCycle::step(const ChunkDecision& decision, std::int64_t now_ms) {
  return accept(decision, now_ms);
}

StepResult DetectionCycle::skip(std::uint64_t seq_no, std::int64_t now_ms) {
  ChunkDecision lost;
  lost.seq_no = seq_no;
  return accept(lost, now_ms);
}

StepResult DetectionCycle::accept(const ChunkDecision& decision, std::int64_t now_ms) {
  if (state_.last_seq_no && decision.seq_no != *state_.last_seq_no + 1) {
    throw SequencingError("chunk " + std::to_string(decision.seq_no) + " arrived after " +
                          std::to_string(*state_.last_seq_no));
  }
  state_.last_seq_no = decision.seq_no;

  if (state_.phase == Phase::Refractory && now_ms >= state_.refractory_until_ms) {
    state_.phase = Phase::Collecting;
  }

  state_.collected.push_back(decision);
  StepResult result;
  if (state_.collected.size() < kWindowSize) return result;

  WindowResult w;
  w.first_seq = state_.collected.front().seq_no;
  w.last_seq = state_.collected.back().seq_no;
  w.vote_count = count_votes(state_.collected);
  w.voted_trigger = w.vote_count >= cfg_.vote_k;

  if (w.voted_trigger) {
    if (state_.phase == Phase::Refractory) {
      w.suppressed = true;
    } else {
      double loudest = dsp::kLoudnessFloorDbfs;
      for (const auto& d : state_.collected) loudest = std::max(loudest, d.loudness_dbfs);
      result.trigger = TriggerEvent{w.last_seq, w.vote_count, loudest, now_ms};
      state_.phase = Phase::Refractory;
      state_.refractory_until_ms = now_ms + cfg_.refractory_ms;
    }
  }
  result.window = w;
  state_.collected.clear();
  return result;
}

}  // namespace nudge::detector
