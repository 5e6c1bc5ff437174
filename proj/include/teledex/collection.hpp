#pragma once

// Environment abstraction over simulated devices: recorders with injectable
// latency, jitter and dropout; first-order-lag actuators; and the fixed-rate
// coordinator loop that gathers, validates and buffers observations.

#include "teledex/kinematics.hpp"
#include "teledex/timesync.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace teledex {

enum class RecorderKind { arm, hand, camera, tactile };

std::string_view to_string(RecorderKind kind);
RecorderKind parse_recorder_kind(std::string_view text);

struct JitterModel {
  double latency_mean = 0.0;    // seconds
  double latency_stddev = 0.0;  // seconds
  double dropout_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RecorderDescriptor {
  std::string name;
  RecorderKind kind = RecorderKind::arm;
  double rate = 25.0;   // Hz
  double phase = 0.0;   // sample clock offset, seconds
  std::size_t channels = 5;  // tactile only
  JitterModel jitter;

  void validate() const;
};

/// Named recorder sets: "ideal" (no latency, same phase) and "paper-like"
/// (arm, hand, top camera and tactile pad with 5-40 ms header latency).
std::vector<RecorderDescriptor> recorder_preset(std::string_view name);

struct FrameRef {
  std::uint64_t index = 0;  // camera sample count since episode start
  std::string id;           // "<camera>/<index>"

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct Observation {
  JointVector qpos;
  JointVector qvel;
  JointVector action;
  std::map<std::string, FrameRef> frames;
  std::map<std::string, std::vector<double>> tactile;
  SyncBundle sync;
  std::size_t step_index = 0;
};

struct EnvironmentConfig {
  std::size_t arm_dof = 6;
  /// Empty selects [-pi, pi] for every arm joint.
  JointVector arm_lower;
  JointVector arm_upper;
  std::shared_ptr<const HandModel> hand;
  SyncPolicy sync_policy;
  std::uint64_t seed = 0;
  double control_rate_hz = 25.0;
  double lag_gain = 0.5;

  std::size_t total_dof() const;
  void validate() const;
};

struct EpisodeBuffer {
  std::vector<Observation> observations;
  double started_at = 0.0;
  double ended_at = 0.0;
  nlohmann::json config_snapshot;
};

class Environment {
public:
  explicit Environment(EnvironmentConfig config);

  /// Recorders join between episodes only. Each draws from its own stream
  /// seeded by (environment seed, recorder name, jitter seed).
  void register_recorder(const RecorderDescriptor& descriptor);
  const std::vector<RecorderDescriptor>& recorders() const { return descriptors_; }

  void start_episode(double now);
  void stop_episode();
  bool in_episode() const { return in_episode_; }

  Observation get_observation(double now);
  /// Moves every joint a fraction lag_gain toward the action, clamped to limits.
  Observation step(const JointVector& action, double now);

  void reset_state(const JointVector& qpos);
  const JointVector& state() const { return state_; }
  const EnvironmentConfig& config() const { return config_; }
  std::size_t total_dof() const { return config_.total_dof(); }
  double dt() const { return 1.0 / config_.control_rate_hz; }

private:
  struct RecorderState {
    RecorderDescriptor descriptor;
    std::mt19937_64 rng;
    bool has_sample = false;
    std::int64_t last_seen = 0;
    std::int64_t first_index = 0;
    double stamp = 0.0;
    JointVector values;
    std::uint64_t frame_index = 0;
    std::vector<double> tactile;
  };

  void poll(RecorderState& rec, double now, bool force);
  JointVector lower_limits() const;
  JointVector upper_limits() const;

  EnvironmentConfig config_;
  std::vector<RecorderDescriptor> descriptors_;
  std::vector<RecorderState> states_;
  JointVector state_;
  JointVector last_action_;
  JointVector last_observed_qpos_;
  bool in_episode_ = false;
  std::size_t steps_taken_ = 0;
};

using Policy = std::function<JointVector(const Observation&, std::size_t step)>;

/// Runs `steps` control cycles of simulated time starting at clock.now().
EpisodeBuffer run_episode(Environment& env, const Policy& policy, std::size_t steps,
                          SimulatedClock& clock);

}  // namespace teledex
