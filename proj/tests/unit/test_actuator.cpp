#include <doctest.h>

#include <set>

#include "nudge/errors.hpp"
#include "nudge/protocol.hpp"
#include "nudge/simulator.hpp"
#include "nudge/stimulus.hpp"

using namespace nudge;
using namespace nudge::actuator;

namespace {

// One closed-loop calibration cycle against a simulated sleeper: send the
// nudge, wait out the movement delay, and count any telemetry as movement.
// A sleeper who moves also stops snoring.
NudgeOutcome nudge_once(sim::DeviceSimulator& dev, int intensity, std::int64_t& now, std::uint8_t seq) {
  const auto body = protocol::encode_frame(protocol::NudgeFrame{StimulusKind::Vibrate, intensity, seq});
  dev.handle(body, now);
  now += 15000;
  const bool moved = !dev.poll_telemetry(now).empty();
  now += 45000;
  return NudgeOutcome{moved, moved};
}

}  // namespace

TEST_CASE("stimulus names") {
  CHECK(parse_stimulus_kind("ZAP") == StimulusKind::Zap);
  CHECK(parse_stimulus_kind("shock") == StimulusKind::Zap);
  CHECK(parse_stimulus_kind("Vibrate") == StimulusKind::Vibrate);
  CHECK(parse_stimulus_kind("beep") == StimulusKind::Beep);
  CHECK_FALSE(parse_stimulus_kind("poke"));
  for (auto k : {StimulusKind::Beep, StimulusKind::Vibrate, StimulusKind::Zap}) {
    CHECK(parse_stimulus_kind(to_string(k)) == k);
  }
}

TEST_CASE("escalation picks the kind by loudness") {
  StimulusPlan plan;
  CHECK(select_stimulus(plan, -5.0) == Stimulus{StimulusKind::Vibrate, 50});
  plan.escalation_enabled = true;
  CHECK(select_stimulus(plan, -30.1).kind == StimulusKind::Vibrate);
  CHECK(select_stimulus(plan, -30.0).kind == StimulusKind::Zap);
  CHECK(select_stimulus(plan, -2.0).kind == StimulusKind::Zap);
  plan.intensity = 80;
  CHECK(select_stimulus(plan, -2.0).intensity == 80);

  plan.intensity = 101;
  CHECK_THROWS_AS(validate(plan), ContractViolation);
  plan.intensity = 100;
  plan.quiet_threshold_dbfs = 3.0;
  CHECK_THROWS_AS(validate(plan), ContractViolation);
}

TEST_CASE("calibration steps and clamps") {
  auto c = make_calibration(50);
  c = calibrate_update(c, {true, true});
  CHECK(c.current_intensity == 40);
  CHECK(c.last_outcome == Outcome::Success);
  CHECK(c.mns_candidate == 50);
  c = calibrate_update(c, {true, false});
  CHECK(c.current_intensity == 50);
  CHECK(c.last_outcome == Outcome::Failure);
  c = calibrate_update(c, {false, true});
  CHECK(c.current_intensity == 60);
  CHECK(c.mns_candidate == 50);

  auto lo = make_calibration(10);
  CHECK(calibrate_update(lo, {true, true}).current_intensity == 10);
  auto hi = make_calibration(100);
  CHECK(calibrate_update(hi, {false, false}).current_intensity == 100);
  auto odd = make_calibration(95, 10, 10, 100);
  CHECK(calibrate_update(odd, {false, false}).current_intensity == 100);

  CHECK(clamp_intensity(-4) == 0);
  CHECK(clamp_intensity(140) == 100);
}

TEST_CASE("calibration stays in range under any outcome sequence") {
  for (unsigned mask = 0; mask < 4096; mask += 7) {
    auto c = make_calibration(50);
    for (int i = 0; i < 12; ++i) {
      const bool ok = (mask >> i) & 1u;
      c = calibrate_update(c, {ok, ok});
      CHECK(c.current_intensity >= 10);
      CHECK(c.current_intensity <= 100);
    }
  }
}

TEST_CASE("closed loop converges to the sleeper's threshold bracket") {
  sim::DeviceSimulator dev(sim::Scenario::responds_at(70));
  dev.handle(protocol::encode_frame(protocol::SubscribeAccelFrame{}), 0);
  auto c = make_calibration(50);
  std::int64_t now = 1000;
  std::vector<int> trace;
  for (int cycle = 0; cycle < 12; ++cycle) {
    c = calibrate_update(c, nudge_once(dev, c.current_intensity, now, static_cast<std::uint8_t>(cycle)));
    trace.push_back(c.current_intensity);
  }
  CHECK(trace[0] == 60);
  CHECK(trace[1] == 70);
  // Once inside, it never leaves {60, 70}.
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(std::set<int>{60, 70}.count(trace[i]) == 1);
  CHECK(c.mns_candidate == 70);
}

TEST_CASE("movement probability never falls as intensity rises") {
  std::vector<sim::SleeperModel> models(4);
  models[0].kind = sim::SleeperModel::Kind::Always;
  models[1].kind = sim::SleeperModel::Kind::Never;
  models[2].kind = sim::SleeperModel::Kind::Threshold;
  models[3].kind = sim::SleeperModel::Kind::Logistic;
  for (const auto& m : models) {
    for (auto k : {StimulusKind::Beep, StimulusKind::Vibrate, StimulusKind::Zap}) {
      for (int i = 0; i < 100; ++i) CHECK(m.movement_probability(k, i) <= m.movement_probability(k, i + 1));
    }
  }
}

TEST_CASE("empirical response rate is monotone within 2%") {
  constexpr int kTrials = 10000;
  double prev = -1.0;
  for (int intensity = 0; intensity <= 100; intensity += 10) {
    sim::DeviceSimulator dev(sim::Scenario::standard());
    for (int t = 0; t < kTrials; ++t) {
      dev.handle(protocol::encode_frame(protocol::NudgeFrame{StimulusKind::Zap, intensity, static_cast<std::uint8_t>(t & 1)}), t);
    }
    const auto s = dev.stats();
    CHECK(s.nudges_delivered == kTrials);
    const double rate = static_cast<double>(s.movements) / kTrials;
    CHECK(rate >= prev - 0.02);
    prev = rate;
  }
}
