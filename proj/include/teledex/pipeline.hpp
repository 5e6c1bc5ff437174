#pragma once

// End-to-end simulated collection: synthetic operator motion is retargeted
// (or directly mapped) onto the robot hand, the environment steps at the
// control rate, and each episode is written to the dataset.

#include "teledex/collection.hpp"
#include "teledex/config_io.hpp"
#include "teledex/episode_store.hpp"
#include "teledex/human_motion.hpp"
#include "teledex/parallel.hpp"
#include "teledex/solver.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace teledex {

struct SimulationSetup {
  RunConfig run;
  EnvironmentSpec environment;
  std::shared_ptr<const HandModel> hand;
  std::shared_ptr<const HandModel> human;
  RetargetConfig retarget;
  CalibrationProfile profile;
  std::optional<JointMapping> mapping;
};

/// Loads and validates everything a run needs. Nothing is written.
SimulationSetup load_simulation(const std::filesystem::path& run_config,
                                std::optional<std::uint64_t> seed_override = std::nullopt,
                                std::optional<std::filesystem::path> output_override = std::nullopt);

/// Robot at theta0 = lower limits against the operator's open pose, with the
/// proximity band taken from one period of the default grasp.
CalibrationProfile default_calibration(const HandModel& hand, const HandModel& human,
                                       double dt);

std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t episode);
std::string episode_name(std::size_t episode);

/// One episode in memory.
EpisodeBuffer simulate_episode(const SimulationSetup& setup, std::size_t episode);

SessionMetadata episode_metadata(const SimulationSetup& setup, std::size_t episode,
                                 const EpisodeBuffer& buffer);
CameraInfo camera_info(const SimulationSetup& setup);

struct EpisodeResult {
  std::string episode_id;
  std::filesystem::path dir;
  double duration_sec = 0.0;
  SyncSummary sync;
  std::vector<SyncBundle> bundles;
  EpisodeManifest manifest;
};

struct SimulationReport {
  std::vector<EpisodeResult> episodes;
  SyncSummary total;

  nlohmann::json to_json() const;
};

/// Simulates and writes every episode. Episodes are independent, so the
/// parallel path gives the same bytes as the serial one.
SimulationReport simulate_episodes(const SimulationSetup& setup,
                                   Execution execution = Execution::serial);

}  // namespace teledex
