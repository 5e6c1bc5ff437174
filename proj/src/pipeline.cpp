#include "teledex/pipeline.hpp"

#include "teledex/errors.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace teledex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<const HandModel> load_model(const fs::path& path) {
  return std::make_shared<const HandModel>(load_hand_model_file(path.string()));
}

nlohmann::json summary_json(const SyncSummary& s) {
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"timesteps", s.timesteps},
          {"valid", s.valid},
          {"sync_success_rate", s.success_rate},
          {"avg_sync_error_ms", opt(s.avg_error_ms)},
          {"tp99_ms", opt(s.tp99_ms)}};
}

}  // namespace

CalibrationProfile default_calibration(const HandModel& hand, const HandModel& human, double dt) {
  const auto motion = default_grasp(human);
  const auto count = static_cast<std::size_t>(std::llround(motion.period / dt));
  const auto frames = grasp_trajectory(human, motion, count, dt);
  HumanHandFrame rest;
  rest.points = forward_keypoints(human, motion.open);
  return calibrate(hand, hand.lower_limits(), rest, frames);
}

SimulationSetup load_simulation(const fs::path& run_config, std::optional<std::uint64_t> seed,
                                std::optional<fs::path> output) {
  SimulationSetup s;
  const auto base = run_config.parent_path();
  s.run = run_config_from_json(read_json_file(run_config), base);
  if (seed) s.run.seed = *seed;
  if (output) s.run.output = *output;
  s.run.validate();

  s.environment =
      environment_spec_from_json(read_json_file(s.run.environment), s.run.environment.parent_path());
  if (s.run.hand_model.empty()) {
    if (!s.environment.hand_model) {
      throw ValidationError("no hand model given in the run or environment config");
    }
    s.run.hand_model = *s.environment.hand_model;
  }
  s.hand = load_model(s.run.hand_model);
  s.human = load_model(s.run.human_model);
  if (s.environment.hardware.hand_type.empty()) s.environment.hardware.hand_type = s.hand->name();

  auto env_config = s.environment.config;
  env_config.hand = s.hand;
  env_config.validate();
  for (const auto& d : s.environment.recorders) d.validate();

  s.retarget = retarget_config_from_json(read_json_file(s.run.retarget));
  resolve_keypoints(*s.hand, s.retarget);
  resolve_coupled_fingers(*s.hand, s.retarget);

  const double dt = 1.0 / env_config.control_rate_hz;
  if (s.run.calibration) {
    s.profile = calibration_profile_from_json(read_json_file(*s.run.calibration));
    check_dimension(*s.hand, s.profile.theta0);
  } else {
    s.profile = default_calibration(*s.hand, *s.human, dt);
  }
  if (s.run.control == ControlMode::direct) {
    s.mapping = joint_mapping_from_json(read_json_file(*s.run.mapping));
    if (s.mapping->target_dof != s.hand->dof()) {
      throw DimensionError("joint mapping targets " + std::to_string(s.mapping->target_dof) +
                           " joints but the hand has " + std::to_string(s.hand->dof()));
    }
    for (const auto& e : s.mapping->entries) {
      if (e.source >= s.human->dof()) {
        throw DimensionError("joint mapping source index " + std::to_string(e.source) +
                             " is outside the operator model");
      }
    }
  }
  return s;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t episode) {
  std::seed_seq seq{static_cast<std::uint32_t>(run_seed), static_cast<std::uint32_t>(run_seed >> 32),
                    static_cast<std::uint32_t>(episode),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(episode) >> 32)};
  return std::mt19937_64(seq)();
}

std::string episode_name(std::size_t episode) {
  char name[32];
  std::snprintf(name, sizeof(name), "episode_%06zu", episode);
  return name;
}

EpisodeBuffer simulate_episode(const SimulationSetup& setup, std::size_t episode) {
  const std::uint64_t seed = episode_seed(setup.run.seed, episode);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto motion = default_grasp(*setup.human);
  motion.period *= 0.9 + 0.2 * unit(rng);
  motion.phase = 2.0 * std::numbers::pi * unit(rng);

  auto config = setup.environment.config;
  config.hand = setup.hand;
  config.seed = seed;
  Environment env(config);
  for (const auto& d : setup.environment.recorders) env.register_recorder(d);

  const auto arm = static_cast<Eigen::Index>(config.arm_dof);
  JointVector arm_phase(arm);
  for (Eigen::Index j = 0; j < arm; ++j) arm_phase[j] = 2.0 * std::numbers::pi * unit(rng);

  const double dt = env.dt();
  const auto hand_dof = static_cast<Eigen::Index>(setup.hand->dof());
  JointVector start(env.total_dof());
  start.head(arm) = 0.3 * arm_phase.array().sin();
  start.tail(hand_dof) = setup.profile.theta0;
  env.reset_state(start);

  Retargeter retargeter(setup.hand, setup.profile, setup.retarget, setup.profile.theta0);
  const Policy policy = [&](const Observation&, std::size_t k) {
    const double t = static_cast<double>(k) * dt;
    JointVector action(env.total_dof());
    for (Eigen::Index j = 0; j < arm; ++j) {
      action[j] = 0.3 * std::sin(2.0 * std::numbers::pi * t / 6.0 + arm_phase[j]);
    }
    if (setup.run.control == ControlMode::direct) {
      action.tail(hand_dof) =
          direct_joint_map(human_pose(*setup.human, motion, t), *setup.mapping, *setup.hand);
    } else {
      action.tail(hand_dof) = retargeter.step(human_frame(*setup.human, motion, t)).theta;
    }
    return action;
  };

  SimulatedClock clock;
  auto buffer = run_episode(env, policy, setup.run.steps, clock);
  buffer.config_snapshot["episode_seed"] = seed;
  buffer.config_snapshot["policy"] = {
      {"control", setup.run.control == ControlMode::direct ? "direct" : "retarget"},
      {"retarget", to_json(setup.retarget)},
      {"human_model", setup.human->name()},
      {"grasp_period", motion.period},
      {"grasp_phase", motion.phase}};
  if (setup.mapping) buffer.config_snapshot["policy"]["mapping"] = to_json(*setup.mapping);
  return buffer;
}

SessionMetadata episode_metadata(const SimulationSetup& setup, std::size_t episode,
                                 const EpisodeBuffer& buffer) {
  const auto& env = setup.environment;
  SessionMetadata m;
  m.task_name = setup.run.task_name;
  m.episode_id = episode_name(episode);
  m.session_id = setup.run.session_id;
  m.timesteps = buffer.observations.size();
  m.control_freq_hz = env.config.control_rate_hz;
  m.dt = 1.0 / m.control_freq_hz;
  m.duration_sec = static_cast<double>(m.timesteps) * m.dt;
  m.hardware_preset = env.hardware.preset;
  m.arm_type = env.hardware.arm_type;
  m.hand_type = env.hardware.hand_type.empty() ? setup.hand->name() : env.hardware.hand_type;
  m.total_dof = env.config.arm_dof + setup.hand->dof();
  m.qpos_dim = m.total_dof;
  m.camera_preset = env.hardware.camera_preset;
  m.camera_type = env.hardware.camera_type;
  m.resolution =
      std::to_string(env.hardware.frame_width) + "x" + std::to_string(env.hardware.frame_height);
  for (const auto& d : env.recorders) {
    if (d.kind == RecorderKind::camera) {
      if (m.camera_streams.empty()) m.fps = d.rate;
      m.camera_streams.push_back(d.name);
    } else if (d.kind == RecorderKind::tactile) {
      m.tactile_sensors.push_back(d.name);
    }
  }
  m.sync_policy = env.config.sync_policy;
  return m;
}

CameraInfo camera_info(const SimulationSetup& setup) {
  const auto& hw = setup.environment.hardware;
  CameraInfo out;
  for (const auto& d : setup.environment.recorders) {
    if (d.kind != RecorderKind::camera) continue;
    CameraIntrinsics c;
    c.width = hw.frame_width;
    c.height = hw.frame_height;
    c.fx = 0.9 * hw.frame_width;
    c.fy = 0.9 * hw.frame_width;
    c.cx = 0.5 * hw.frame_width;
    c.cy = 0.5 * hw.frame_height;
    c.pose = d.name;
    out.emplace(d.name, c);
  }
  return out;
}

json SimulationReport::to_json() const {
  json per = json::array();
  for (const auto& e : episodes) {
    auto j = summary_json(e.sync);
    j["episode"] = e.episode_id;
    j["duration_sec"] = e.duration_sec;
    per.push_back(j);
  }
  auto doc = summary_json(total);
  doc["episodes"] = episodes.size();
  doc["per_episode"] = per;
  return doc;
}

SimulationReport simulate_episodes(const SimulationSetup& setup, Execution execution) {
  const auto count = setup.run.episodes;
  const auto cameras = camera_info(setup);
  std::vector<EpisodeResult> results(count);
  std::vector<std::string> errors(count);
  const bool parallel = execution == Execution::parallel;
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto e = static_cast<std::size_t>(k);
    try {
      const auto buffer = simulate_episode(setup, e);
      const auto metadata = episode_metadata(setup, e, buffer);
      auto& r = results[e];
      r.episode_id = metadata.episode_id;
      r.dir = episode_dir(setup.run.output, metadata);
      r.duration_sec = metadata.duration_sec;
      r.bundles.reserve(buffer.observations.size());
      for (const auto& obs : buffer.observations) r.bundles.push_back(obs.sync);
      r.sync = summarize(r.bundles);
      r.manifest = write_episode(buffer, metadata, cameras, r.dir);
    } catch (const std::exception& ex) {
      errors[e] = episode_name(e) + ": " + ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw Error(err);
  }

  SimulationReport report;
  std::vector<SyncBundle> pooled;
  for (auto& r : results) pooled.insert(pooled.end(), r.bundles.begin(), r.bundles.end());
  report.total = summarize(pooled);
  report.episodes = std::move(results);
  return report;
}

}  // namespace teledex
