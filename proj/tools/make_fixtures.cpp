// Regenerates the sample operator recordings under data/human/ from the
// human reference model: a static open-hand pose, one calibration grasp
// period and a longer grasp trajectory.

#include "teledex/config_io.hpp"
#include "teledex/human_motion.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Write sample human trajectories"};
  std::string model_path = "data/models/human_reference.json";
  std::string out_dir = "data/human";
  double dt = 0.04;
  std::size_t frames = 250;
  app.add_option("--model", model_path, "Human reference model");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--dt", dt, "Frame spacing, seconds");
  app.add_option("--frames", frames, "Length of the grasp trajectory");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto human = teledex::load_hand_model_file(model_path);
    const auto motion = teledex::default_grasp(human);
    const std::filesystem::path dir(out_dir);

    teledex::write_trajectory_file(dir / "static.jsonl",
                                   teledex::grasp_trajectory(human, motion, 1, dt));
    const auto period = static_cast<std::size_t>(motion.period / dt + 0.5);
    teledex::write_trajectory_file(dir / "calibration_motion.jsonl",
                                   teledex::grasp_trajectory(human, motion, period, dt));
    teledex::write_trajectory_file(dir / "grasp.jsonl",
                                   teledex::grasp_trajectory(human, motion, frames, dt));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
