// Serial reference vs OpenMP path for the two kernels that fan out over
// episodes: simulate_episodes and validate_dataset.

#include "teledex/episode_store.hpp"
#include "teledex/parallel.hpp"
#include "teledex/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;
using namespace teledex;

namespace {

template <typename F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int k = 0; k < repeats; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time serial and parallel simulation and validation"};
  std::string config = std::string(TELEDEX_DATA_DIR) + "/configs/run_paper_like.json";
  std::string scratch = (fs::temp_directory_path() / "teledex-bench").string();
  int repeats = 3;
  std::size_t episodes = 0;
  app.add_option("--config", config, "Run config");
  app.add_option("--scratch", scratch, "Directory for the generated datasets");
  app.add_option("--repeats", repeats, "Best-of count")->check(CLI::PositiveNumber);
  app.add_option("--episodes", episodes, "Override the episode count");
  CLI11_PARSE(app, argc, argv);

  const fs::path serial_dir = fs::path(scratch) / "serial";
  const fs::path parallel_dir = fs::path(scratch) / "parallel";
  auto serial_setup = load_simulation(config, std::nullopt, serial_dir);
  auto parallel_setup = load_simulation(config, std::nullopt, parallel_dir);
  if (episodes > 0) {
    serial_setup.run.episodes = episodes;
    parallel_setup.run.episodes = episodes;
  }

  std::printf("threads: %d  episodes: %zu  steps: %zu\n", max_threads(),
              serial_setup.run.episodes, serial_setup.run.steps);

  SimulationReport rs;
  SimulationReport rp;
  const double sim_s = best_of(repeats, [&] { rs = simulate_episodes(serial_setup, Execution::serial); });
  const double sim_p =
      best_of(repeats, [&] { rp = simulate_episodes(parallel_setup, Execution::parallel); });
  const bool same_sim = rs.to_json() == rp.to_json();

  DatasetReport vs;
  DatasetReport vp;
  const double val_s = best_of(repeats, [&] { vs = validate_dataset(serial_dir, Execution::serial); });
  const double val_p =
      best_of(repeats, [&] { vp = validate_dataset(serial_dir, Execution::parallel); });
  const bool same_val = vs.to_json() == vp.to_json();

  std::printf("%-18s %10s %10s %8s %s\n", "kernel", "serial s", "parallel s", "speedup", "agree");
  std::printf("%-18s %10.3f %10.3f %8.2f %s\n", "simulate_episodes", sim_s, sim_p, sim_s / sim_p,
              same_sim ? "yes" : "NO");
  std::printf("%-18s %10.3f %10.3f %8.2f %s\n", "validate_dataset", val_s, val_p, val_s / val_p,
              same_val ? "yes" : "NO");

  std::error_code ec;
  fs::remove_all(scratch, ec);
  return same_sim && same_val ? 0 : 1;
}
