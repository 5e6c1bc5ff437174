#pragma once

// JSON documents read and written by the command-line tools.

#include "teledex/collection.hpp"
#include "teledex/retarget.hpp"

#include <json.hpp>

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace teledex {

nlohmann::json to_json(const RetargetConfig& config);
RetargetConfig retarget_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const CalibrationProfile& profile);
CalibrationProfile calibration_profile_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const JointMapping& mapping);
JointMapping joint_mapping_from_json(const nlohmann::json& doc);

/// `{"t": seconds, "points": {"<finger>/<j>": [x, y, z]}}`. A null
/// coordinate reads as NaN so corrupt frames survive parsing and can be
/// rejected (with their line number) by the caller.
nlohmann::json to_json(const HumanHandFrame& frame);
HumanHandFrame human_frame_from_json(const nlohmann::json& doc);

struct TrajectoryLine {
  std::size_t line = 0;  // 1-based
  HumanHandFrame frame;
};

/// Blank lines are skipped. Parse failures name the offending line.
std::vector<TrajectoryLine> read_trajectory(std::istream& in);
std::vector<TrajectoryLine> read_trajectory_file(const std::filesystem::path& path);
void write_trajectory_file(const std::filesystem::path& path,
                           const std::vector<HumanHandFrame>& frames);

/// Camera and hardware labels copied into episode metadata.
struct HardwareLabels {
  std::string preset = "sim_arm6_o6";
  std::string arm_type = "sim_arm_6dof";
  std::string hand_type;  // defaults to the hand model name
  std::string camera_preset = "single_top";
  std::string camera_type = "sim_rgb";
  std::uint32_t frame_width = 32;
  std::uint32_t frame_height = 24;
};

/// Environment document. The hand model is resolved separately because it is
/// shared with the retargeting side.
struct EnvironmentSpec {
  EnvironmentConfig config;  // hand left empty
  std::vector<RecorderDescriptor> recorders;
  std::optional<std::filesystem::path> hand_model;
  HardwareLabels hardware;
};

EnvironmentSpec environment_spec_from_json(const nlohmann::json& doc,
                                           const std::filesystem::path& base_dir);
nlohmann::json to_json(const EnvironmentSpec& spec);

enum class ControlMode { retarget, direct };

struct RunConfig {
  std::filesystem::path environment;
  std::filesystem::path retarget;
  std::filesystem::path hand_model;
  std::filesystem::path human_model;
  std::optional<std::filesystem::path> calibration;
  std::optional<std::filesystem::path> mapping;  // direct mode only
  std::filesystem::path output;
  std::size_t episodes = 1;
  std::size_t steps = 491;
  std::uint64_t seed = 0;
  std::string task_name = "pick_and_place";
  std::string session_id = "session_000";
  ControlMode control = ControlMode::retarget;

  void validate() const;
};

/// Relative paths resolve against base_dir.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace teledex
