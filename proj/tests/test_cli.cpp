#include "oracles.hpp"

#include "teledex/cli.hpp"
#include "teledex/config_io.hpp"
#include "teledex/episode_store.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <regex>
#include <sstream>

using namespace teledex;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string path_of(const std::string& rel) { return (oracle::data_dir() / rel).string(); }

HumanHandFrame posed_frame(const HandModel& model, const JointVector& theta, double t) {
  return {t, forward_keypoints(model, theta)};
}

void scale_lengths(json& node, double factor) {
  if (node.is_object()) {
    for (auto& [key, value] : node.items()) {
      if ((key == "xyz" || key == "offset") && value.is_array()) {
        for (auto& v : value) v = v.get<double>() * factor;
      } else {
        scale_lengths(value, factor);
      }
    }
  } else if (node.is_array()) {
    for (auto& v : node) scale_lengths(v, factor);
  }
}

// Writes the human reference posed at its lower limits as the static frame.
std::string write_static(const fs::path& dir) {
  const auto human = oracle::load_model("human_reference");
  const auto p = dir / "static.jsonl";
  write_trajectory_file(p, {posed_frame(human, human.lower_limits(), 0.0)});
  return p.string();
}

std::vector<std::vector<double>> read_thetas(const fs::path& path) {
  std::vector<std::vector<double>> out;
  std::istringstream in(oracle::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    out.push_back(json::parse(line).at("theta").get<std::vector<double>>());
  }
  return out;
}

std::string write_run_config(const fs::path& dir, std::size_t episodes, std::size_t steps,
                             const std::string& control = "retarget") {
  json doc = {{"control", control},
              {"environment", path_of("configs/env_paper_like.json")},
              {"episodes", episodes},
              {"hand_model", path_of("models/o6_like.json")},
              {"human_model", path_of("models/human_reference.json")},
              {"output", (dir / "dataset").string()},
              {"retarget", path_of("configs/retarget_default.json")},
              {"seed", 11},
              {"steps", steps}};
  if (control == "direct") doc["mapping"] = path_of("configs/mapping_human_to_o6.json");
  const auto p = dir / "run.json";
  write_text_file(p, canonical_json(doc));
  return p.string();
}

std::vector<double> numbers_after(const std::string& text, const std::string& label) {
  std::vector<double> out;
  const std::regex re(label + " ([0-9.]+)");
  for (std::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it) {
    out.push_back(std::stod((*it)[1]));
  }
  return out;
}

}  // namespace

TEST_CASE("calibrate against an identical skeleton") {
  oracle::TempDir tmp("cli-cal");
  const auto profile = (tmp.path() / "profile.json").string();
  const auto r = run_cli({"calibrate", "--model", path_of("models/human_reference.json"),
                          "--static", write_static(tmp.path()), "--motion",
                          path_of("human/calibration_motion.jsonl"), "--out", profile, "--json"});
  REQUIRE(r.code == cli::kExitOk);
  const auto doc = json::parse(r.out);
  CHECK(doc["fingers"].size() == 5);
  for (const auto& [name, finger] : doc["fingers"].items()) {
    for (const auto& s : finger["scale"]) CHECK(std::abs(s.get<double>() - 1.0) < 1e-12);
    for (const auto& d : finger["root_offset"]) CHECK(std::abs(d.get<double>()) < 1e-12);
    if (name != "thumb") CHECK(finger["rho_min"].get<double>() < finger["rho_max"].get<double>());
  }
  CHECK(fs::exists(profile));
  const auto loaded = read_json_file(profile);
  CHECK(oracle::read_file(profile) == canonical_json(loaded));

  const auto text = run_cli({"calibrate", "--model", path_of("models/human_reference.json"),
                             "--static", write_static(tmp.path()), "--motion",
                             path_of("human/calibration_motion.jsonl"), "--out", profile});
  CHECK(text.code == cli::kExitOk);
  CHECK(text.out.find("index: s = 1.0000 1.0000 1.0000") != std::string::npos);
}

TEST_CASE("calibrate against a half-scale robot") {
  oracle::TempDir tmp("cli-half");
  auto doc = read_json_file(oracle::model_path("human_reference"));
  scale_lengths(doc, 0.5);
  doc["name"] = "half";
  const auto model = (tmp.path() / "half.json").string();
  write_text_file(model, doc.dump(2));
  const auto r = run_cli({"calibrate", "--model", model, "--static", write_static(tmp.path()),
                          "--motion", path_of("human/calibration_motion.jsonl"), "--out",
                          (tmp.path() / "p.json").string(), "--json"});
  REQUIRE(r.code == cli::kExitOk);
  std::size_t segments = 0;
  const auto fingers = json::parse(r.out)["fingers"];
  for (const auto& [name, finger] : fingers.items()) {
    for (const auto& s : finger["scale"]) {
      CHECK(s.get<double>() == doctest::Approx(0.5).epsilon(1e-12));
      ++segments;
    }
  }
  CHECK(segments == 15);
}

TEST_CASE("calibrate rejects a motion without thumb-finger travel") {
  oracle::TempDir tmp("cli-flat");
  const auto human = oracle::load_model("human_reference");
  std::vector<HumanHandFrame> flat;
  for (int k = 0; k < 10; ++k) flat.push_back(posed_frame(human, human.lower_limits(), 0.04 * k));
  const auto motion = tmp.path() / "flat.jsonl";
  write_trajectory_file(motion, flat);
  const auto r = run_cli({"calibrate", "--model", path_of("models/o6_like.json"), "--static",
                          write_static(tmp.path()), "--motion", motion.string(), "--out",
                          (tmp.path() / "p.json").string()});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find("thumb-index") != std::string::npos);
  CHECK(r.err.find("rho_min = rho_max") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp.path() / "p.json"));
}

TEST_CASE("retarget holds still on a constant trajectory") {
  oracle::TempDir tmp("cli-const");
  const auto profile = (tmp.path() / "profile.json").string();
  REQUIRE(run_cli({"calibrate", "--model", path_of("models/o6_like.json"), "--static",
                   path_of("human/static.jsonl"), "--motion",
                   path_of("human/calibration_motion.jsonl"), "--out", profile})
              .code == 0);

  auto config = read_json_file(path_of("configs/retarget_default.json"));
  config["alpha_smooth"] = 0.0;
  const auto cfg = (tmp.path() / "cfg.json").string();
  write_text_file(cfg, canonical_json(config));

  const auto grasp = read_trajectory_file(path_of("human/grasp.jsonl"));
  std::vector<HumanHandFrame> frames(30, grasp.at(60).frame);
  for (std::size_t k = 0; k < frames.size(); ++k) frames[k].timestamp = 0.04 * k;
  const auto in = tmp.path() / "in.jsonl";
  write_trajectory_file(in, frames);
  const auto out = tmp.path() / "out.jsonl";
  const auto r = run_cli({"retarget", "--model", path_of("models/o6_like.json"), "--profile",
                          profile, "--config", cfg, "--in", in.string(), "--out", out.string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto thetas = read_thetas(out);
  REQUIRE(thetas.size() == 30);
  for (std::size_t k = 1; k < thetas.size(); ++k) {
    for (std::size_t j = 0; j < thetas[k].size(); ++j) {
      CHECK(std::abs(thetas[k][j] - thetas[0][j]) < 1e-5);
    }
  }
}

TEST_CASE("retarget on the planar finger follows the grid oracle") {
  oracle::TempDir tmp("cli-planar");
  const auto model = oracle::load_model("planar2");
  const auto static_path = tmp.path() / "static.jsonl";
  write_trajectory_file(static_path, {posed_frame(model, model.lower_limits(), 0.0)});
  const auto profile = (tmp.path() / "profile.json").string();
  REQUIRE(run_cli({"calibrate", "--model", oracle::model_path("planar2").string(), "--static",
                   static_path.string(), "--motion", static_path.string(), "--out", profile})
              .code == 0);

  std::vector<HumanHandFrame> frames;
  for (int k = 0; k < 12; ++k) {
    const double t = 0.25 * k;
    Eigen::Vector2d th(0.75 + 0.6 * std::sin(t), 0.75 + 0.6 * std::sin(1.7 * t + 0.5));
    frames.push_back(posed_frame(model, th, t));
  }
  const auto in = tmp.path() / "in.jsonl";
  write_trajectory_file(in, frames);
  const auto out = tmp.path() / "out.jsonl";
  const auto r = run_cli({"retarget", "--model", oracle::model_path("planar2").string(),
                          "--profile", profile, "--config",
                          path_of("configs/retarget_default.json"), "--in", in.string(), "--out",
                          out.string(), "--json"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(json::parse(r.out)["frames"] == 12);

  const auto thetas = read_thetas(out);
  REQUIRE(thetas.size() == frames.size());
  Eigen::Vector2d prev = model.lower_limits();
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    const Vec3 pip = f.points.at({0, 1});
    const Vec3 tip = f.points.at({0, 2});
    const auto best = oracle::grid_search(
        [&](const Eigen::Vector2d& th) { return oracle::planar_cost(th, pip, tip, prev, 1.0, 0.1); },
        0.0, 1.5, 0.0, 1.5, 1e-3);
    CHECK(std::abs(thetas[k][0] - best.theta[0]) < 2e-3);
    CHECK(std::abs(thetas[k][1] - best.theta[1]) < 2e-3);
    prev = Eigen::Vector2d(thetas[k][0], thetas[k][1]);
  }
}

TEST_CASE("retarget reports the line of a corrupt frame") {
  oracle::TempDir tmp("cli-nan");
  const auto profile = (tmp.path() / "profile.json").string();
  REQUIRE(run_cli({"calibrate", "--model", path_of("models/o6_like.json"), "--static",
                   path_of("human/static.jsonl"), "--motion",
                   path_of("human/calibration_motion.jsonl"), "--out", profile})
              .code == 0);
  const auto grasp = read_trajectory_file(path_of("human/grasp.jsonl"));
  std::string text;
  for (std::size_t k = 0; k < 6; ++k) {
    auto doc = to_json(grasp[k].frame);
    if (k == 3) doc["points"]["index/3"][1] = nullptr;
    text += doc.dump() + "\n";
  }
  const auto in = tmp.path() / "in.jsonl";
  oracle::write_file(in, text);
  const auto out = tmp.path() / "out.jsonl";
  const auto r = run_cli({"retarget", "--model", path_of("models/o6_like.json"), "--profile",
                          profile, "--config", path_of("configs/retarget_default.json"), "--in",
                          in.string(), "--out", out.string()});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find("line 4") != std::string::npos);
  const auto thetas = read_thetas(out);
  REQUIRE(thetas.size() == 6);
  CHECK(thetas[3] == thetas[2]);

  oracle::write_file(in, text + "{not json}\n");
  const auto parse = run_cli({"retarget", "--model", path_of("models/o6_like.json"), "--profile",
                              profile, "--config", path_of("configs/retarget_default.json"),
                              "--in", in.string(), "--out", out.string()});
  CHECK(parse.code == cli::kExitUsage);
  CHECK(parse.err.find("line 7") != std::string::npos);
}

TEST_CASE("simulate is deterministic and agrees with validate") {
  oracle::TempDir tmp("cli-sim");
  const auto config = write_run_config(tmp.path(), 3, 60);
  const auto a = run_cli({"simulate", "--config", config, "--out", (tmp.path() / "a").string(),
                          "--json"});
  REQUIRE(a.code == cli::kExitOk);
  const auto b = run_cli({"simulate", "--config", config, "--out", (tmp.path() / "b").string(),
                          "--parallel"});
  REQUIRE(b.code == cli::kExitOk);
  const auto c = run_cli({"simulate", "--config", config, "--out", (tmp.path() / "c").string(),
                          "--seed", "12"});
  REQUIRE(c.code == cli::kExitOk);

  for (int e = 0; e < 3; ++e) {
    const auto rel = fs::path("session_000") / ("episode_00000" + std::to_string(e)) /
                     "manifest.json";
    const auto ma = oracle::read_file(tmp.path() / "a" / rel);
    CHECK(ma == oracle::read_file(tmp.path() / "b" / rel));
    CHECK(ma != oracle::read_file(tmp.path() / "c" / rel));
  }

  const auto sim = json::parse(a.out);
  CHECK(sim["episodes"] == 3);
  CHECK(sim["seed"] == 11);
  for (const auto& e : sim["per_episode"]) CHECK(e["duration_sec"].get<double>() == doctest::Approx(2.4));

  const auto v = run_cli({"validate", (tmp.path() / "a").string(), "--json"});
  REQUIRE(v.code == cli::kExitOk);
  const auto report = json::parse(v.out);
  CHECK(report["failures"].empty());
  CHECK(report["total_timesteps"] == 180);
  CHECK(report["sync_success_rate"] == sim["sync_success_rate"]);
  CHECK(report["avg_sync_error_ms"] == sim["avg_sync_error_ms"]);
  CHECK(report["tp99_ms"] == sim["tp99_ms"]);

  // The printed text carries the same figures, rounded.
  const auto text = run_cli({"validate", (tmp.path() / "a").string()});
  CHECK(text.code == cli::kExitOk);
  const auto avgs = numbers_after(text.out, "avg");
  REQUIRE(avgs.size() == 4);
  CHECK(std::abs(avgs.back() - report["avg_sync_error_ms"].get<double>()) <= 0.005 + 1e-9);
  const auto rates = numbers_after(text.out, "sync success");
  CHECK(std::abs(rates.back() - report["sync_success_rate"].get<double>()) <= 0.005 + 1e-9);
  CHECK(text.out.find("failures 0") != std::string::npos);
}

TEST_CASE("direct control runs end to end") {
  oracle::TempDir tmp("cli-direct");
  const auto config = write_run_config(tmp.path(), 1, 25, "direct");
  const auto r = run_cli({"simulate", "--config", config});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("episode_000000: duration 1.00 s") != std::string::npos);
  CHECK(run_cli({"validate", (tmp.path() / "dataset").string()}).code == cli::kExitOk);
}

TEST_CASE("validate flags a deleted frame") {
  oracle::TempDir tmp("cli-del");
  const auto config = write_run_config(tmp.path(), 2, 30);
  REQUIRE(run_cli({"simulate", "--config", config}).code == cli::kExitOk);
  const auto root = tmp.path() / "dataset";
  const auto victim = root / "session_000" / "episode_000001" / "frames" / "cam_top" / "000003.ppm";
  REQUIRE(fs::exists(victim));
  fs::remove(victim);
  const auto r = run_cli({"validate", root.string(), "--json"});
  CHECK(r.code == cli::kExitFailure);
  const auto doc = json::parse(r.out);
  REQUIRE(doc["failures"].size() == 1);
  CHECK(doc["failures"][0]["episode"] == "session_000/episode_000001");
  CHECK(doc["per_episode"].size() == 1);
}

TEST_CASE("usage and configuration errors exit with 2") {
  oracle::TempDir tmp("cli-usage");
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run_cli({"calibrate", "--model", "x"}).code == cli::kExitUsage);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
  CHECK(run_cli({"validate", (tmp.path() / "missing").string()}).code == cli::kExitUsage);
  CHECK(run_cli({"simulate", "--config", (tmp.path() / "missing.json").string()}).code ==
        cli::kExitUsage);

  auto doc = read_json_file(write_run_config(tmp.path(), 1, 10));
  doc["episodes"] = 0;
  const auto bad = tmp.path() / "bad.json";
  write_text_file(bad, canonical_json(doc));
  const auto r = run_cli({"simulate", "--config", bad.string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(tmp.path() / "dataset"));
}
