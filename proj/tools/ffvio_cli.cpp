#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ffvio/harness.hpp"
#include "ffvio/trajectory_io.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kEstimatorFailure = 1;
constexpr int kBadConfig = 2;

struct LoopFlags {
  std::vector<std::string> disabled;

  void add(CLI::App& app) {
    for (const auto& name : ffvio::loop_names()) {
      app.add_flag_callback("--disable-" + name, [this, name] { disabled.push_back(name); },
                            "turn off the " + name + " loop");
    }
  }
  void apply(ffvio::EstimatorConfig& cfg) const {
    for (const auto& name : disabled) ffvio::set_loop(cfg, name, false);
  }
};

ffvio::RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ffvio::RunConfig cfg = ffvio::load_run_config(path);
  if (seed) ffvio::apply_seed(cfg, *seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-loop visual-inertial odometry on simulated stereo data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool sync = false;
  bool async = false;
  LoopFlags loop_flags;

  auto* run = app.add_subcommand("run", "simulate a scenario and run the estimator");
  run->add_option("config", config_path, "scenario YAML")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out-dir", out_dir, "output directory");
  auto* sync_flag = run->add_flag("--sync", sync, "run all stages on one thread");
  run->add_flag("--async", async, "run frontend, window and loop closure on separate threads")
      ->excludes(sync_flag);
  loop_flags.add(*run);

  std::vector<std::string> ablate_loops;
  auto* ablate = app.add_subcommand("ablate", "run every on/off combination of the feedback loops");
  ablate->add_option("config", config_path, "scenario YAML")->required();
  ablate->add_option("--seed", seed, "override the scenario seed");
  ablate->add_option("--out-dir", out_dir, "output directory");
  ablate->add_option("--loops", ablate_loops, "loops to toggle (default: all six)")->delimiter(',');

  std::string est_path;
  std::string gt_path;
  double tolerance = 0.01;
  auto* eval = app.add_subcommand("eval", "absolute trajectory error between two TUM files");
  eval->add_option("estimate", est_path, "estimated trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("ground_truth", gt_path, "reference trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("--tolerance", tolerance, "timestamp association tolerance in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kBadConfig;
  }

  try {
    if (*run) {
      ffvio::RunConfig cfg = load(config_path, seed);
      if (sync) cfg.estimator.async = false;
      if (async) cfg.estimator.async = true;
      loop_flags.apply(cfg.estimator);
      const ffvio::ScenarioRun result = ffvio::run_scenario(cfg);
      ffvio::write_outputs(out_dir, result);
      const auto& r = result.report;
      std::printf("scenario %s seed %llu (%s)\n", r.scenario.c_str(),
                  static_cast<unsigned long long>(r.seed), r.mode.c_str());
      std::printf("ATE %.4f m over %.2f m (%.3f%%), %d frames, %d keyframes, %d loops\n", r.ate_rmse,
                  r.trajectory_length, 100.0 * r.ate_over_length, r.frames, r.keyframes,
                  r.loops_accepted);
      if (r.hard_failure) {
        std::fprintf(stderr, "estimator failure: %s\n", r.failure_message.c_str());
        return kEstimatorFailure;
      }
      return kOk;
    }
    if (*ablate) {
      ffvio::RunConfig cfg = load(config_path, seed);
      const auto rows = ffvio::ablation_matrix(cfg, ablate_loops);
      const std::string table = ffvio::ablation_table_csv(rows);
      std::filesystem::create_directories(out_dir);
      std::ofstream(std::filesystem::path(out_dir) / "ablation.csv") << table;
      std::cout << table;
      return kOk;
    }
    if (*eval) {
      const auto est = ffvio::read_tum(std::filesystem::path(est_path));
      const auto gt = ffvio::read_tum(std::filesystem::path(gt_path));
      const auto ate = ffvio::evaluate_ate(est, gt, tolerance);
      std::printf("pairs %zu\nate_rmse %.9f\n", ate.pairs, ate.rmse);
      return kOk;
    }
  } catch (const ffvio::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kBadConfig;
  } catch (const ffvio::AlignmentError& e) {
    std::fprintf(stderr, "evaluation error: %s\n", e.what());
    return kEstimatorFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kEstimatorFailure;
  }
  return kOk;
}
