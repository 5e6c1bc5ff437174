#include "teledex/cli.hpp"

#include "teledex/config_io.hpp"
#include "teledex/episode_store.hpp"
#include "teledex/errors.hpp"
#include "teledex/pipeline.hpp"
#include "teledex/solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>

namespace teledex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Raised for anything wrong with the inputs before processing starts.
class UsageError : public Error {
public:
  using Error::Error;
};

template <typename F>
auto loading(F&& load) {
  try {
    return load();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

std::string ms(const std::optional<double>& v) { return v ? fmt("%.2f", *v) : "n/a"; }

std::string vec(const Vec3& v) {
  return "(" + fmt("%.4f", v.x()) + ", " + fmt("%.4f", v.y()) + ", " + fmt("%.4f", v.z()) + ")";
}

void print_json(std::ostream& out, const json& doc) { out << doc.dump(2) << "\n"; }

// calibrate ------------------------------------------------------------------

struct CalibrateArgs {
  std::string model;
  std::string static_frame;
  std::string motion;
  std::string out;
  std::vector<double> theta0;
};

int cmd_calibrate(const CalibrateArgs& a, bool as_json, std::ostream& out) {
  const auto [model, rest, motion, theta0] = loading([&] {
    auto model = load_hand_model_file(a.model);
    auto statics = read_trajectory_file(a.static_frame);
    if (statics.empty()) {
      throw ParseError(a.static_frame + ": no calibration frame");
    }
    std::vector<HumanHandFrame> motion;
    for (auto& line : read_trajectory_file(a.motion)) motion.push_back(std::move(line.frame));
    JointVector theta0 = model.lower_limits();
    if (!a.theta0.empty()) {
      theta0 = Eigen::Map<const JointVector>(a.theta0.data(),
                                              static_cast<Eigen::Index>(a.theta0.size()));
      check_dimension(model, theta0);
    }
    return std::make_tuple(std::move(model), statics.front().frame, std::move(motion), theta0);
  });
  if (!rest.all_finite()) {
    throw NonFiniteError("calibration frame has non-finite keypoints");
  }
  for (std::size_t k = 0; k < motion.size(); ++k) {
    if (!motion[k].all_finite()) {
      throw NonFiniteError("motion frame " + std::to_string(k + 1) + " has non-finite keypoints");
    }
  }

  const auto profile = calibrate(model, theta0, rest, motion);
  write_text_file(a.out, canonical_json(to_json(profile)));

  json fingers = json::object();
  for (const auto& f : model.fingers()) {
    const std::string name(finger_name(f.slot));
    json scales = json::array();
    for (std::size_t k = 0; k + 1 < f.keypoints.size(); ++k) {
      scales.push_back(profile.scale.at({f.slot, f.keypoints[k].id}));
    }
    const auto& d = profile.root_offset.at(f.slot);
    json entry = {{"scale", scales}, {"root_offset", {d.x(), d.y(), d.z()}}};
    if (profile.rho_min.count(f.slot)) {
      entry["rho_min"] = profile.rho_min.at(f.slot);
      entry["rho_max"] = profile.rho_max.at(f.slot);
    }
    fingers[name] = entry;
  }
  if (as_json) {
    print_json(out, {{"profile", a.out}, {"fingers", fingers}});
    return kExitOk;
  }
  for (const auto& f : model.fingers()) {
    const auto& e = fingers.at(std::string(finger_name(f.slot)));
    out << finger_name(f.slot) << ": s =";
    for (const auto& s : e.at("scale")) out << " " << fmt("%.4f", s.get<double>());
    out << "  delta = " << vec(profile.root_offset.at(f.slot));
    if (e.contains("rho_min")) {
      out << "  rho = [" << fmt("%.4f", e.at("rho_min").get<double>()) << ", "
          << fmt("%.4f", e.at("rho_max").get<double>()) << "]";
    }
    out << "\n";
  }
  out << "profile written to " << a.out << "\n";
  return kExitOk;
}

// retarget -------------------------------------------------------------------

struct RetargetArgs {
  std::string model;
  std::string profile;
  std::string config;
  std::string in;
  std::string out;
};

int cmd_retarget(const RetargetArgs& a, bool as_json, std::ostream& out, std::ostream& err) {
  auto [model, profile, config, lines] = loading([&] {
    auto model = std::make_shared<const HandModel>(load_hand_model_file(a.model));
    auto profile = calibration_profile_from_json(read_json_file(a.profile));
    check_dimension(*model, profile.theta0);
    auto config = retarget_config_from_json(read_json_file(a.config));
    resolve_keypoints(*model, config);
    resolve_coupled_fingers(*model, config);
    auto lines = read_trajectory_file(a.in);
    return std::make_tuple(model, std::move(profile), std::move(config), std::move(lines));
  });

  Retargeter retargeter(model, profile, config, clamp_to_limits(*model, profile.theta0));
  std::string text;
  std::vector<std::size_t> rejected;
  double total_cost = 0.0;
  for (const auto& line : lines) {
    json row = {{"t", line.frame.timestamp}};
    try {
      if (!line.frame.all_finite()) {
        throw NonFiniteError("non-finite keypoint or timestamp");
      }
      const auto result = retargeter.step(line.frame);
      const auto& b = result.report.breakdown;
      const auto& th = result.theta;
      row["theta"] = std::vector<double>(th.data(), th.data() + th.size());
      row["cost"] = {{"align", b.align}, {"couple", b.couple}, {"smooth", b.smooth},
                     {"total", b.total}};
      row["iterations"] = result.report.iterations;
      row["converged"] = result.report.converged;
      total_cost += b.total;
    } catch (const Error& e) {
      err << "line " << line.line << ": frame rejected: " << e.what() << "\n";
      rejected.push_back(line.line);
      if (!std::isfinite(line.frame.timestamp)) row["t"] = nullptr;
      const auto& th = retargeter.last();
      row["theta"] = std::vector<double>(th.data(), th.data() + th.size());
      row["rejected"] = true;
    }
    text += row.dump() + "\n";
  }
  write_text_file(a.out, text);

  const std::size_t solved = lines.size() - rejected.size();
  const double mean = solved ? total_cost / static_cast<double>(solved) : 0.0;
  if (as_json) {
    print_json(out, {{"frames", lines.size()},
                     {"rejected_lines", rejected},
                     {"mean_total_cost", mean},
                     {"output", a.out}});
  } else {
    out << "frames: " << lines.size() << "  rejected: " << rejected.size()
        << "  mean cost: " << fmt("%.6e", mean) << "\n";
    out << "trajectory written to " << a.out << "\n";
  }
  return rejected.empty() ? kExitOk : kExitFailure;
}

// simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool parallel = false;
};

int cmd_simulate(const SimulateArgs& a, bool as_json, std::ostream& out) {
  const auto setup = loading([&] {
    std::optional<fs::path> output;
    if (!a.out.empty()) output = a.out;
    return load_simulation(a.config, a.seed, output);
  });
  const auto report =
      simulate_episodes(setup, a.parallel ? Execution::parallel : Execution::serial);
  if (as_json) {
    auto doc = report.to_json();
    doc["output"] = setup.run.output.generic_string();
    doc["seed"] = setup.run.seed;
    print_json(out, doc);
    return kExitOk;
  }
  for (const auto& e : report.episodes) {
    out << e.episode_id << ": duration " << fmt("%.2f", e.duration_sec) << " s  sync success "
        << fmt("%.2f", e.sync.success_rate) << "%  avg " << ms(e.sync.avg_error_ms)
        << " ms  tp99 " << ms(e.sync.tp99_ms) << " ms\n";
  }
  out << "total: " << report.episodes.size() << " episodes, " << report.total.timesteps
      << " timesteps  sync success " << fmt("%.2f", report.total.success_rate) << "%  avg "
      << ms(report.total.avg_error_ms) << " ms  tp99 " << ms(report.total.tp99_ms) << " ms\n";
  out << "dataset written to " << setup.run.output.generic_string() << "\n";
  return kExitOk;
}

// validate -------------------------------------------------------------------

int cmd_validate(const std::string& root, bool as_json, std::ostream& out) {
  if (!fs::is_directory(root)) {
    throw UsageError("dataset root '" + root + "' does not exist");
  }
  const auto report = validate_dataset(root, Execution::parallel);
  if (as_json) {
    print_json(out, report.to_json());
  } else {
    for (const auto& e : report.per_episode) {
      out << e.episode << ": " << e.sync.timesteps << " timesteps  sync success "
          << fmt("%.2f", e.sync.success_rate) << "%  avg " << ms(e.sync.avg_error_ms)
          << " ms  tp99 " << ms(e.sync.tp99_ms) << " ms\n";
    }
    for (const auto& f : report.failures) out << f.episode << ": FAILED " << f.error << "\n";
    out << "total: " << report.episodes << " episodes, " << report.total_timesteps
        << " timesteps  sync success " << fmt("%.2f", report.sync_success_rate) << "%  avg "
        << ms(report.avg_sync_error_ms) << " ms  tp99 " << ms(report.tp99_ms) << " ms  failures "
        << report.failures.size() << "\n";
  }
  return report.failures.empty() ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulated teleoperation data collection."};
  app.name("teledex");
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output on stdout");

  CalibrateArgs cal;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Build a calibration profile");
  calibrate_cmd->add_option("--model", cal.model, "Robot hand model")->required();
  calibrate_cmd->add_option("--static", cal.static_frame, "Static pose (JSON-lines, first frame)")
      ->required();
  calibrate_cmd->add_option("--motion", cal.motion, "Calibration motion (JSON-lines)")->required();
  calibrate_cmd->add_option("--theta0", cal.theta0, "Robot calibration pose (default: lower limits)");
  calibrate_cmd->add_option("--out", cal.out, "Profile output path")->required();
  calibrate_cmd->add_flag("--json", as_json);

  RetargetArgs ret;
  auto* retarget_cmd = app.add_subcommand("retarget", "Retarget a human trajectory");
  retarget_cmd->add_option("--model", ret.model, "Robot hand model")->required();
  retarget_cmd->add_option("--profile", ret.profile, "Calibration profile")->required();
  retarget_cmd->add_option("--config", ret.config, "Retarget config")->required();
  retarget_cmd->add_option("--in", ret.in, "Human trajectory (JSON-lines)")->required();
  retarget_cmd->add_option("--out", ret.out, "Joint trajectory output (JSON-lines)")->required();
  retarget_cmd->add_flag("--json", as_json);

  SimulateArgs sim;
  std::uint64_t seed = 0;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run simulated collection episodes");
  simulate_cmd->add_option("--config", sim.config, "Run config")->required();
  auto* seed_opt = simulate_cmd->add_option("--seed", seed, "Override the run seed");
  simulate_cmd->add_option("--out", sim.out, "Override the dataset root");
  simulate_cmd->add_flag("--parallel", sim.parallel, "Simulate episodes on all threads");
  simulate_cmd->add_flag("--json", as_json);

  std::string root;
  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset and report sync metrics");
  validate_cmd->add_option("root", root, "Dataset root")->required();
  validate_cmd->add_flag("--json", as_json);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (calibrate_cmd->parsed()) return cmd_calibrate(cal, as_json, out);
    if (retarget_cmd->parsed()) return cmd_retarget(ret, as_json, out, err);
    if (simulate_cmd->parsed()) {
      if (*seed_opt) sim.seed = seed;
      return cmd_simulate(sim, as_json, out);
    }
    if (validate_cmd->parsed()) return cmd_validate(root, as_json, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace teledex::cli
