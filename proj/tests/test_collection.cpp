#include "oracles.hpp"

#include "teledex/collection.hpp"
#include "teledex/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

using namespace teledex;

namespace {

std::shared_ptr<const HandModel> o6() {
  static const auto model = std::make_shared<const HandModel>(oracle::load_model("o6_like"));
  return model;
}

EnvironmentConfig make_config(std::uint64_t seed = 1) {
  EnvironmentConfig c;
  c.hand = o6();
  c.seed = seed;
  return c;
}

Environment make_env(const std::vector<RecorderDescriptor>& recorders, std::uint64_t seed = 1) {
  Environment env(make_config(seed));
  for (const auto& d : recorders) env.register_recorder(d);
  return env;
}

Policy hold_policy() {
  return [](const Observation& obs, std::size_t) { return obs.qpos; };
}

Policy sine_policy(std::size_t dof) {
  return [dof](const Observation&, std::size_t k) {
    JointVector a(static_cast<Eigen::Index>(dof));
    for (std::size_t j = 0; j < dof; ++j) {
      a[static_cast<Eigen::Index>(j)] = 0.4 + 0.3 * std::sin(0.05 * static_cast<double>(k) + j);
    }
    return a;
  };
}

bool same_buffers(const EpisodeBuffer& a, const EpisodeBuffer& b) {
  if (a.observations.size() != b.observations.size()) return false;
  if (a.started_at != b.started_at || a.ended_at != b.ended_at) return false;
  if (a.config_snapshot != b.config_snapshot) return false;
  for (std::size_t k = 0; k < a.observations.size(); ++k) {
    const auto& x = a.observations[k];
    const auto& y = b.observations[k];
    if (!(x.qpos.array() == y.qpos.array()).all()) return false;
    if (!(x.qvel.array() == y.qvel.array()).all()) return false;
    if (!(x.action.array() == y.action.array()).all()) return false;
    if (x.frames != y.frames || x.tactile != y.tactile || !(x.sync == y.sync)) return false;
    if (x.step_index != y.step_index) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("registration contract") {
  auto env = make_env(recorder_preset("ideal"));
  CHECK(env.recorders().size() == 3);
  CHECK_THROWS_AS(env.register_recorder({"arm", RecorderKind::camera, 30.0, 0.0, 5, {}}),
                  ValidationError);
  CHECK_THROWS_AS(env.register_recorder({"bad", RecorderKind::camera, 0.0, 0.0, 5, {}}),
                  ValidationError);
  CHECK_THROWS_AS(
      env.register_recorder({"bad", RecorderKind::camera, 30.0, 0.0, 5, {-0.1, 0.0, 0.0, 0}}),
      ValidationError);
  CHECK_THROWS_AS(
      env.register_recorder({"bad", RecorderKind::camera, 30.0, 0.0, 5, {0.0, 0.0, 1.5, 0}}),
      ValidationError);

  SimulatedClock clock;
  const auto buffer = run_episode(env, hold_policy(), 10, clock);
  for (const auto& obs : buffer.observations) {
    CHECK(obs.sync.timestamps.size() == 3);
    CHECK(obs.sync.timestamps.count("arm") == 1);
    CHECK(obs.sync.timestamps.count("hand") == 1);
    CHECK(obs.sync.timestamps.count("cam_top") == 1);
  }

  env.start_episode(clock.now());
  CHECK_THROWS_AS(env.register_recorder({"late", RecorderKind::camera, 30.0, 0.0, 5, {}}),
                  ValidationError);
  env.stop_episode();

  Environment empty(make_config());
  CHECK_THROWS_AS(empty.start_episode(0.0), ValidationError);
  CHECK_THROWS_AS(empty.get_observation(0.0), ValidationError);
  CHECK_THROWS_AS(Environment(EnvironmentConfig{}), ValidationError);
}

TEST_CASE("qpos covers arm and hand") {
  auto env = make_env(recorder_preset("ideal"));
  CHECK(env.total_dof() == 12);
  env.start_episode(0.0);
  const auto obs = env.get_observation(0.0);
  CHECK(obs.qpos.size() == 12);
  CHECK(obs.qvel.size() == 12);
  CHECK(obs.action.size() == 12);
  CHECK(obs.frames.count("cam_top") == 1);
  CHECK_THROWS_AS(env.step(JointVector::Zero(11), 0.04), DimensionError);
}

TEST_CASE("zero jitter with a shared clock has no spread") {
  auto env = make_env(recorder_preset("ideal"));
  SimulatedClock clock;
  const auto buffer = run_episode(env, sine_policy(12), 50, clock);
  for (const auto& obs : buffer.observations) {
    CHECK(obs.sync.is_valid);
    CHECK(obs.sync.max_diff == 0.0);
  }
}

TEST_CASE("deterministic latency stays within the closed-form bound") {
  std::vector<RecorderDescriptor> recs{
      {"arm", RecorderKind::arm, 200.0, 0.0, 5, {0.005, 0.0, 0.0, 1}},
      {"hand", RecorderKind::hand, 50.0, 0.003, 5, {0.020, 0.0, 0.0, 2}},
      {"cam", RecorderKind::camera, 30.0, 0.011, 5, {0.037, 0.0, 0.0, 3}},
      {"pad", RecorderKind::tactile, 100.0, 0.002, 5, {0.012, 0.0, 0.0, 4}},
  };
  // Each stamp lies in (now - 1/rate - latency, now - latency].
  double newest = -1e9;
  double oldest = 1e9;
  for (const auto& d : recs) {
    newest = std::max(newest, -d.jitter.latency_mean);
    oldest = std::min(oldest, -1.0 / d.rate - d.jitter.latency_mean);
  }
  const double bound = newest - oldest;

  auto env = make_env(recs, 9);
  SimulatedClock clock(3.0);
  const auto buffer = run_episode(env, sine_policy(12), 300, clock);
  for (const auto& obs : buffer.observations) {
    CHECK(obs.sync.max_diff <= bound + 1e-9);
    for (const auto& [name, t] : obs.sync.timestamps) CHECK(t <= obs.sync.checked_at);
  }
}

TEST_CASE("a camera that stops delivering goes stale") {
  auto recs = recorder_preset("ideal");
  for (auto& d : recs) {
    if (d.kind == RecorderKind::camera) d.jitter.dropout_prob = 1.0;
  }
  auto env = make_env(recs);
  SimulatedClock clock;
  const auto buffer = run_episode(env, hold_policy(), 60, clock);
  const SyncPolicy policy;
  bool saw_stale = false;
  for (const auto& obs : buffer.observations) {
    const double now = obs.sync.checked_at;
    CHECK(obs.sync.timestamps.at("cam_top") == 0.0);
    CHECK(obs.frames.at("cam_top").index == 0);
    TimestampSet expected{{"arm", obs.sync.timestamps.at("arm")},
                          {"hand", obs.sync.timestamps.at("hand")},
                          {"cam_top", 0.0}};
    CHECK(obs.sync == validate(policy, now, expected));
    if (now > policy.freshness_window + 1e-9) {
      CHECK(obs.sync.failure == SyncFailure{SyncFailureKind::stale, "cam_top"});
      saw_stale = true;
    }
  }
  CHECK(saw_stale);
}

TEST_CASE("first-order lag actuator") {
  auto env = make_env(recorder_preset("ideal"));
  JointVector start = JointVector::Constant(12, 0.2);
  env.reset_state(start);
  env.start_episode(0.0);

  auto obs = env.step(start, 0.04);
  CHECK((obs.qpos.array() == start.array()).all());
  CHECK(obs.qvel.cwiseAbs().maxCoeff() == 0.0);

  JointVector action = start;
  action[0] += 0.1;
  obs = env.step(action, 0.08);
  CHECK(obs.qpos[0] - start[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(obs.qvel[0] == doctest::Approx(0.05 / 0.04).epsilon(1e-12));

  double gap = std::abs(action[0] - obs.qpos[0]);
  for (int k = 0; k < 40; ++k) {
    obs = env.step(action, 0.12 + 0.04 * k);
    const double next = std::abs(action[0] - obs.qpos[0]);
    CHECK(next <= gap);
    CHECK(obs.qpos[0] <= action[0]);
    gap = next;
  }
  CHECK(gap < 1e-12);
  env.stop_episode();
}

TEST_CASE("actions outside the limits are clamped") {
  auto env = make_env(recorder_preset("ideal"));
  env.start_episode(0.0);
  const auto lo = o6()->lower_limits();
  const auto hi = o6()->upper_limits();
  for (int k = 0; k < 20; ++k) {
    const auto obs = env.step(JointVector::Constant(12, 10.0), 0.04 * (k + 1));
    CHECK((obs.qpos.tail(6).array() <= hi.array()).all());
    CHECK((obs.qpos.tail(6).array() >= lo.array()).all());
    CHECK(obs.qpos[0] <= std::numbers::pi);
  }
}

TEST_CASE("velocity equals the position delta over dt") {
  auto env = make_env(recorder_preset("paper-like"), 4);
  SimulatedClock clock;
  const auto buffer = run_episode(env, sine_policy(12), 100, clock);
  JointVector prev = JointVector::Zero(12);
  for (const auto& obs : buffer.observations) {
    CHECK(((obs.qvel * 0.04) - (obs.qpos - prev)).cwiseAbs().maxCoeff() < 1e-12);
    prev = obs.qpos;
  }
}

TEST_CASE("cycle accounting") {
  auto env = make_env(recorder_preset("paper-like"), 2);
  SimulatedClock clock;
  const auto buffer = run_episode(env, sine_policy(12), 491, clock);
  CHECK(buffer.observations.size() == 491);
  CHECK(buffer.ended_at - buffer.started_at == doctest::Approx(19.64).epsilon(1e-12));
  for (std::size_t k = 0; k < buffer.observations.size(); ++k) {
    CHECK(buffer.observations[k].step_index == k);
    CHECK(buffer.observations[k].sync.checked_at ==
          doctest::Approx(0.04 * static_cast<double>(k + 1)).epsilon(1e-12));
  }

  SimulatedClock one_clock;
  auto env1 = make_env(recorder_preset("ideal"));
  const auto one = run_episode(env1, hold_policy(), 1, one_clock);
  CHECK(one.observations.size() == 1);
  CHECK(one.observations[0].step_index == 0);
  CHECK_THROWS_AS(run_episode(env1, hold_policy(), 0, one_clock), ValidationError);
}

TEST_CASE("same seed gives identical buffers") {
  auto run = [](std::uint64_t seed) {
    auto env = make_env(recorder_preset("paper-like"), seed);
    SimulatedClock clock;
    return run_episode(env, sine_policy(12), 200, clock);
  };
  const auto a = run(3);
  const auto b = run(3);
  const auto c = run(4);
  CHECK(same_buffers(a, b));
  CHECK_FALSE(same_buffers(a, c));
  CHECK(a.config_snapshot["recorders"].size() == 4);
  CHECK(a.config_snapshot["seed"] == 3);
}

TEST_CASE("presets") {
  CHECK(recorder_preset("ideal").size() == 3);
  const auto jittered = recorder_preset("paper-like");
  CHECK(jittered.size() == 4);
  for (const auto& d : jittered) CHECK_NOTHROW(d.validate());
  CHECK_THROWS_AS(recorder_preset("nope"), ValidationError);
  CHECK(parse_recorder_kind("tactile") == RecorderKind::tactile);
  CHECK_THROWS_AS(parse_recorder_kind("lidar"), ValidationError);
}
