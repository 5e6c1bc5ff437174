#pragma once

// On-disk episode dataset:
//
//   <root>/<session_id>/<episode_id>/
//     telemetry.bin      magic "OTDXTEL1", one JSON header line, raw LE columns
//     metadata.json      session metadata
//     camera_info.json   per-stream intrinsics
//     frames/<cam>/<index>.ppm
//     manifest.json      inventory of every other file with FNV-1a checksums
//
// All JSON is written with sorted keys, two-space indent and a trailing newline.

#include "teledex/collection.hpp"
#include "teledex/parallel.hpp"
#include "teledex/timesync.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace teledex {

inline constexpr int kManifestVersion = 1;
inline constexpr int kTelemetryVersion = 1;
inline constexpr char kTelemetryMagic[] = "OTDXTEL1";

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SessionMetadata {
  std::string task_name;
  std::string episode_id;
  std::string session_id;
  double duration_sec = 0.0;
  std::size_t timesteps = 0;
  std::string hardware_preset;
  std::string arm_type;
  std::string hand_type;
  std::size_t total_dof = 0;
  std::string camera_preset;
  std::string camera_type;
  std::string resolution;
  double fps = 0.0;
  double control_freq_hz = 25.0;
  double dt = 0.04;
  std::string data_format = "otdx_raw_v1";
  std::size_t qpos_dim = 0;
  std::vector<std::string> camera_streams;
  std::vector<std::string> tactile_sensors;
  SyncPolicy sync_policy;

  void validate() const;
  friend bool operator==(const SessionMetadata&, const SessionMetadata&) = default;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string pose;

  void validate(const std::string& name) const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

using CameraInfo = std::map<std::string, CameraIntrinsics>;

struct TelemetryTable {
  std::vector<std::string> sources;
  RowMatrix qpos;
  RowMatrix qvel;
  RowMatrix action;
  RowMatrix timestamps;  // rows x sources
  std::vector<std::uint8_t> sync_validation_is_valid;
  std::vector<double> sync_max_diff;
  std::vector<double> sync_checked_at;
  std::vector<std::uint8_t> sync_failure;       // 0 none, 1 stale, 2 inconsistent
  std::vector<std::uint8_t> sync_stale_source;  // index into sources, 255 when none
  std::vector<double> step_index;
  std::map<std::string, std::vector<double>> frame_index;
  std::map<std::string, RowMatrix> tactile;

  std::size_t rows() const { return sync_max_diff.size(); }
  void validate() const;
  SyncBundle bundle(std::size_t row) const;
  std::vector<SyncBundle> bundles() const;
};

TelemetryTable to_table(const EpisodeBuffer& buffer);

struct ManifestEntry {
  std::string path;
  std::uint64_t bytes = 0;
  std::string fnv1a64;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct EpisodeManifest {
  int version = kManifestVersion;
  std::vector<ManifestEntry> files;

  friend bool operator==(const EpisodeManifest&, const EpisodeManifest&) = default;
};

struct StoredEpisode {
  EpisodeBuffer buffer;
  TelemetryTable table;
  SessionMetadata metadata;
  CameraInfo cameras;
  EpisodeManifest manifest;
};

std::filesystem::path episode_dir(const std::filesystem::path& root,
                                  const SessionMetadata& metadata);

/// Binary PPM (P6) with the frame index in the first pixel as 24-bit RGB.
std::string synthetic_frame(std::uint32_t width, std::uint32_t height, std::uint64_t index);
std::uint64_t frame_index_of(const std::string& ppm);

std::string encode_telemetry(const TelemetryTable& table, double started_at, double ended_at,
                             const nlohmann::json& config_snapshot);

struct DecodedTelemetry {
  TelemetryTable table;
  double started_at = 0.0;
  double ended_at = 0.0;
  nlohmann::json config_snapshot;
};
DecodedTelemetry decode_telemetry(const std::string& bytes);

/// Writes the episode into `dir` (created if absent), replacing any files a
/// previous write left there. Identical inputs give identical bytes.
EpisodeManifest write_episode(const EpisodeBuffer& buffer, const SessionMetadata& metadata,
                              const CameraInfo& cameras, const std::filesystem::path& dir);

/// Verifies the manifest (canonical form, version, inventory, checksums)
/// before decoding anything.
StoredEpisode read_episode(const std::filesystem::path& dir);

enum class SyncFilterMode { drop_invalid, weight_by_max_diff };

struct FilteredTelemetry {
  TelemetryTable table;
  std::vector<double> weights;  // weight mode only
};

/// drop_invalid keeps rows whose sync flag is set; weight_by_max_diff keeps
/// every row with w = clamp(1 - max_diff / tolerance, 0, 1).
FilteredTelemetry filter_by_sync(const TelemetryTable& table, SyncFilterMode mode,
                                 double tolerance);

struct EpisodeFailure {
  std::string episode;  // path relative to the dataset root
  std::string error;
};

struct EpisodeSummary {
  std::string episode;
  SyncSummary sync;
};

struct DatasetReport {
  std::size_t episodes = 0;
  std::size_t total_timesteps = 0;
  double sync_success_rate = 0.0;
  std::optional<double> avg_sync_error_ms;
  std::optional<double> tp99_ms;
  std::vector<EpisodeSummary> per_episode;
  std::vector<EpisodeFailure> failures;

  nlohmann::json to_json() const;
};

/// Every directory two levels below root is an episode. Structural failures
/// are collected per episode; the rest are still aggregated.
DatasetReport validate_dataset(const std::filesystem::path& root,
                               Execution execution = Execution::parallel);

nlohmann::json to_json(const SessionMetadata& metadata);
SessionMetadata session_metadata_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CameraInfo& cameras);
CameraInfo camera_info_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const EpisodeManifest& manifest);

/// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& doc);

}  // namespace teledex
