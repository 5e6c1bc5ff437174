#include "teledex/collection.hpp"

#include "teledex/checksum.hpp"
#include "teledex/errors.hpp"

#include <cmath>
#include <numbers>

namespace teledex {

namespace {

std::mt19937_64 recorder_stream(std::uint64_t env_seed, const RecorderDescriptor& d) {
  const std::uint64_t name_hash = fnv1a64(d.name);
  std::seed_seq seq{static_cast<std::uint32_t>(env_seed), static_cast<std::uint32_t>(env_seed >> 32),
                    static_cast<std::uint32_t>(name_hash), static_cast<std::uint32_t>(name_hash >> 32),
                    static_cast<std::uint32_t>(d.jitter.seed),
                    static_cast<std::uint32_t>(d.jitter.seed >> 32)};
  return std::mt19937_64(seq);
}

nlohmann::json recorder_json(const RecorderDescriptor& d) {
  nlohmann::json j;
  j["name"] = d.name;
  j["kind"] = std::string(to_string(d.kind));
  j["rate"] = d.rate;
  j["phase"] = d.phase;
  if (d.kind == RecorderKind::tactile) j["channels"] = d.channels;
  j["jitter"] = {{"latency_mean", d.jitter.latency_mean},
                 {"latency_stddev", d.jitter.latency_stddev},
                 {"dropout_prob", d.jitter.dropout_prob},
                 {"seed", d.jitter.seed}};
  return j;
}

}  // namespace

std::string_view to_string(RecorderKind kind) {
  switch (kind) {
    case RecorderKind::arm: return "arm";
    case RecorderKind::hand: return "hand";
    case RecorderKind::camera: return "camera";
    case RecorderKind::tactile: return "tactile";
  }
  return "arm";
}

RecorderKind parse_recorder_kind(std::string_view text) {
  for (auto k : {RecorderKind::arm, RecorderKind::hand, RecorderKind::camera,
                 RecorderKind::tactile}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown recorder kind '" + std::string(text) + "'");
}

void JitterModel::validate() const {
  if (!(latency_mean >= 0.0) || !(latency_stddev >= 0.0) || !std::isfinite(latency_mean) ||
      !std::isfinite(latency_stddev)) {
    throw ValidationError("jitter: latency mean and stddev must be finite and nonnegative");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw ValidationError("jitter: dropout probability must lie in [0, 1]");
  }
}

void RecorderDescriptor::validate() const {
  if (name.empty()) {
    throw ValidationError("recorder name is empty");
  }
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ValidationError("recorder '" + name + "': rate must be positive");
  }
  if (!std::isfinite(phase)) {
    throw ValidationError("recorder '" + name + "': phase must be finite");
  }
  if (kind == RecorderKind::tactile && channels == 0) {
    throw ValidationError("recorder '" + name + "': tactile recorder needs channels");
  }
  jitter.validate();
}

std::vector<RecorderDescriptor> recorder_preset(std::string_view name) {
  if (name == "ideal") {
    return {
        {"arm", RecorderKind::arm, 25.0, 0.0, 5, {}},
        {"hand", RecorderKind::hand, 25.0, 0.0, 5, {}},
        {"cam_top", RecorderKind::camera, 25.0, 0.0, 5, {}},
    };
  }
  if (name == "paper-like") {
    // SDK-stamped arm, message-header-stamped hand, camera and tactile pad.
    return {
        {"arm", RecorderKind::arm, 200.0, 0.0, 5, {0.005, 0.001, 0.0, 1}},
        {"cam_top", RecorderKind::camera, 30.0, 0.011, 5, {0.037, 0.002, 0.003, 2}},
        {"hand", RecorderKind::hand, 50.0, 0.003, 5, {0.020, 0.003, 0.002, 3}},
        {"right_hand", RecorderKind::tactile, 100.0, 0.002, 5, {0.012, 0.002, 0.002, 4}},
    };
  }
  throw ValidationError("unknown recorder preset '" + std::string(name) + "'");
}

std::size_t EnvironmentConfig::total_dof() const {
  return arm_dof + (hand ? hand->dof() : 0);
}

void EnvironmentConfig::validate() const {
  if (!hand) {
    throw ValidationError("environment: a hand model is required");
  }
  if (!(control_rate_hz > 0.0) || !std::isfinite(control_rate_hz)) {
    throw ValidationError("environment: control rate must be positive");
  }
  if (!(lag_gain > 0.0 && lag_gain <= 1.0)) {
    throw ValidationError("environment: lag gain must lie in (0, 1]");
  }
  if (arm_lower.size() != arm_upper.size() ||
      (arm_lower.size() != 0 && static_cast<std::size_t>(arm_lower.size()) != arm_dof)) {
    throw DimensionError("environment: arm limits do not match arm DoF");
  }
  if (arm_lower.size() != 0 && (arm_lower.array() > arm_upper.array()).any()) {
    throw ValidationError("environment: arm lower limit exceeds upper limit");
  }
  sync_policy.validate();
}

Environment::Environment(EnvironmentConfig config) : config_(std::move(config)) {
  config_.validate();
  state_ = JointVector::Zero(static_cast<Eigen::Index>(total_dof()))
               .cwiseMax(lower_limits())
               .cwiseMin(upper_limits());
  last_action_ = state_;
  last_observed_qpos_ = state_;
}

JointVector Environment::lower_limits() const {
  JointVector out(static_cast<Eigen::Index>(total_dof()));
  const auto arm = static_cast<Eigen::Index>(config_.arm_dof);
  if (config_.arm_lower.size() != 0) {
    out.head(arm) = config_.arm_lower;
  } else {
    out.head(arm).setConstant(-std::numbers::pi);
  }
  out.tail(static_cast<Eigen::Index>(config_.hand->dof())) = config_.hand->lower_limits();
  return out;
}

JointVector Environment::upper_limits() const {
  JointVector out(static_cast<Eigen::Index>(total_dof()));
  const auto arm = static_cast<Eigen::Index>(config_.arm_dof);
  if (config_.arm_upper.size() != 0) {
    out.head(arm) = config_.arm_upper;
  } else {
    out.head(arm).setConstant(std::numbers::pi);
  }
  out.tail(static_cast<Eigen::Index>(config_.hand->dof())) = config_.hand->upper_limits();
  return out;
}

void Environment::register_recorder(const RecorderDescriptor& descriptor) {
  if (in_episode_) {
    throw ValidationError("cannot register recorder '" + descriptor.name +
                          "' while an episode is in progress");
  }
  descriptor.validate();
  for (const auto& d : descriptors_) {
    if (d.name == descriptor.name) {
      throw ValidationError("recorder '" + descriptor.name + "' is already registered");
    }
    if ((descriptor.kind == RecorderKind::arm || descriptor.kind == RecorderKind::hand) &&
        d.kind == descriptor.kind) {
      throw ValidationError("only one " + std::string(to_string(descriptor.kind)) +
                            " recorder may be registered");
    }
  }
  descriptors_.push_back(descriptor);
  RecorderState rec;
  rec.descriptor = descriptor;
  rec.rng = recorder_stream(config_.seed, descriptor);
  states_.push_back(std::move(rec));
}

void Environment::reset_state(const JointVector& qpos) {
  if (in_episode_) {
    throw ValidationError("cannot reset state during an episode");
  }
  if (static_cast<std::size_t>(qpos.size()) != total_dof()) {
    throw DimensionError("state has " + std::to_string(qpos.size()) + " entries, expected " +
                         std::to_string(total_dof()));
  }
  state_ = qpos.cwiseMax(lower_limits()).cwiseMin(upper_limits());
  last_action_ = state_;
  last_observed_qpos_ = state_;
}

void Environment::poll(RecorderState& rec, double now, bool force) {
  const auto& d = rec.descriptor;
  const auto k = static_cast<std::int64_t>(std::floor((now - d.phase) * d.rate + 1e-9));
  if (rec.has_sample && k <= rec.last_seen) return;

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double roll = uniform(rec.rng);
  const double latency =
      std::max(0.0, d.jitter.latency_mean + d.jitter.latency_stddev * normal(rec.rng));
  rec.last_seen = k;
  if (rec.has_sample && !force && roll < d.jitter.dropout_prob) {
    return;  // sample lost; the held snapshot keeps its old timestamp
  }
  if (!rec.has_sample) rec.first_index = k;
  rec.has_sample = true;
  rec.stamp = d.phase + static_cast<double>(k) / d.rate - latency;

  const auto arm = static_cast<Eigen::Index>(config_.arm_dof);
  const auto hand = static_cast<Eigen::Index>(config_.hand->dof());
  switch (d.kind) {
    case RecorderKind::arm:
      rec.values = state_.head(arm);
      break;
    case RecorderKind::hand:
      rec.values = state_.tail(hand);
      break;
    case RecorderKind::camera:
      rec.frame_index = static_cast<std::uint64_t>(k - rec.first_index);
      break;
    case RecorderKind::tactile: {
      const double closure = hand > 0 ? state_.tail(hand).cwiseAbs().mean() : 0.0;
      rec.tactile.resize(d.channels);
      for (std::size_t c = 0; c < d.channels; ++c) {
        rec.tactile[c] =
            closure * 0.5 * (1.0 + std::sin(0.1 * static_cast<double>(k) + static_cast<double>(c)));
      }
      break;
    }
  }
}

void Environment::start_episode(double now) {
  if (in_episode_) {
    throw ValidationError("episode already in progress");
  }
  if (states_.empty()) {
    throw ValidationError("cannot start an episode without registered recorders");
  }
  for (auto& rec : states_) {
    rec.has_sample = false;
    poll(rec, now, true);
  }
  in_episode_ = true;
  steps_taken_ = 0;
  last_observed_qpos_ = state_;
}

void Environment::stop_episode() { in_episode_ = false; }

Observation Environment::get_observation(double now) {
  if (states_.empty()) {
    throw ValidationError("no recorders registered");
  }
  if (!in_episode_) {
    throw ValidationError("no episode in progress");
  }
  Observation obs;
  obs.qpos = state_;
  TimestampSet stamps;
  const auto arm = static_cast<Eigen::Index>(config_.arm_dof);
  const auto hand = static_cast<Eigen::Index>(config_.hand->dof());
  for (auto& rec : states_) {
    poll(rec, now, false);
    const auto& d = rec.descriptor;
    stamps[d.name] = rec.stamp;
    switch (d.kind) {
      case RecorderKind::arm:
        obs.qpos.head(arm) = rec.values;
        break;
      case RecorderKind::hand:
        obs.qpos.tail(hand) = rec.values;
        break;
      case RecorderKind::camera:
        obs.frames[d.name] = {rec.frame_index, d.name + "/" + std::to_string(rec.frame_index)};
        break;
      case RecorderKind::tactile:
        obs.tactile[d.name] = rec.tactile;
        break;
    }
  }
  obs.qvel = (obs.qpos - last_observed_qpos_) / dt();
  last_observed_qpos_ = obs.qpos;
  obs.action = last_action_;
  obs.step_index = steps_taken_;
  obs.sync = validate(config_.sync_policy, now, stamps);
  return obs;
}

Observation Environment::step(const JointVector& action, double now) {
  if (!in_episode_) {
    throw ValidationError("no episode in progress");
  }
  if (static_cast<std::size_t>(action.size()) != total_dof()) {
    throw DimensionError("action has " + std::to_string(action.size()) + " entries, expected " +
                         std::to_string(total_dof()));
  }
  if (!action.allFinite()) {
    throw NonFiniteError("action contains non-finite values");
  }
  state_ = (state_ + config_.lag_gain * (action - state_))
               .cwiseMax(lower_limits())
               .cwiseMin(upper_limits());
  last_action_ = action;
  ++steps_taken_;
  auto obs = get_observation(now);
  obs.step_index = steps_taken_ - 1;
  return obs;
}

EpisodeBuffer run_episode(Environment& env, const Policy& policy, std::size_t steps,
                          SimulatedClock& clock) {
  if (steps == 0) {
    throw ValidationError("an episode needs at least one step");
  }
  EpisodeBuffer buffer;
  const double t0 = clock.now();
  const double dt = env.dt();
  buffer.started_at = t0;

  const auto& cfg = env.config();
  nlohmann::json snapshot;
  snapshot["arm_dof"] = cfg.arm_dof;
  snapshot["hand_model"] = cfg.hand->name();
  snapshot["hand_dof"] = cfg.hand->dof();
  snapshot["seed"] = cfg.seed;
  snapshot["control_rate_hz"] = cfg.control_rate_hz;
  snapshot["lag_gain"] = cfg.lag_gain;
  snapshot["sync_policy"] = {{"freshness_window", cfg.sync_policy.freshness_window},
                             {"tolerance", cfg.sync_policy.tolerance}};
  snapshot["recorders"] = nlohmann::json::array();
  for (const auto& d : env.recorders()) snapshot["recorders"].push_back(recorder_json(d));
  buffer.config_snapshot = std::move(snapshot);

  env.start_episode(t0);
  Observation obs = env.get_observation(t0);
  buffer.observations.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const JointVector action = policy(obs, k);
    clock.set(t0 + static_cast<double>(k + 1) * dt);
    obs = env.step(action, clock.now());
    obs.step_index = k;
    buffer.observations.push_back(obs);
  }
  env.stop_episode();
  buffer.ended_at = clock.now();
  return buffer;
}

}  // namespace teledex
