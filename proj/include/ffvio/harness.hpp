#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ffvio/pipeline.hpp"

namespace ffvio {

struct AteResult {
  double rmse = 0.0;
  std::size_t pairs = 0;
  Transform alignment;
  /// Translational error of each associated pose after alignment.
  std::vector<double> errors;
  /// False when the positions were degenerate and only a translation was fitted.
  bool rigid = true;
};

/// Aligns `est` onto `gt` and returns the RMSE of the translational
/// residuals. Poses are associated by timestamp within `tolerance`. Throws
/// AlignmentError with fewer than three associated poses.
AteResult evaluate_ate(const Trajectory& est, const Trajectory& gt, double tolerance = 1e-6);
double ate_rmse(const Trajectory& est, const Trajectory& gt, double tolerance = 1e-6);

/// Names of the switchable feedback loops, in a fixed order.
const std::vector<std::string>& loop_names();
/// Throws ConfigError for an unknown name.
void set_loop(EstimatorConfig& cfg, const std::string& name, bool enabled);
bool loop_enabled(const EstimatorConfig& cfg, const std::string& name);

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string mode;
  std::map<std::string, bool> loops;
  bool hard_failure = false;
  std::string failure_message;
  double ate_rmse = 0.0;
  double ate_rmse_imu_rate = 0.0;
  double trajectory_length = 0.0;
  double ate_over_length = 0.0;
  int frames = 0;
  int tracking_lost_frames = 0;
  int low_confidence_frames = 0;
  int keyframes = 0;
  double mean_inliers = 0.0;
  int min_inliers = 0;
  double mean_reprojection_rms = 0.0;
  int window_runs = 0;
  int window_failures = 0;
  int corrections_applied = 0;
  int loops_accepted = 0;
  int loops_rejected = 0;
  ImuBias final_bias;
  ImuBias true_final_bias;
  std::vector<double> frame_errors;
  std::vector<std::pair<double, ImuBias>> bias_trace;
  StageTimes timing;
};

/// Everything but the wall-clock timing, so equal runs give equal text.
std::string report_to_yaml(const RunReport& report);
std::string timing_to_yaml(const StageTimes& timing);

struct ScenarioRun {
  RunReport report;
  MeasurementStream stream;
  PipelineOutput output;
};

/// Simulates the scenario, runs the estimator and evaluates it.
ScenarioRun run_scenario(const RunConfig& cfg);

/// Writes trajectories, report, timing and CSV diagnostics into `dir`.
void write_outputs(const std::filesystem::path& dir, const ScenarioRun& run);

struct AblationRow {
  std::map<std::string, bool> loops;
  RunReport report;
};

/// Runs every on/off combination of `loops` (all six when empty) on the
/// same scenario and seed; loops not listed keep their configured state.
std::vector<AblationRow> ablation_matrix(const RunConfig& cfg, std::vector<std::string> loops = {});
std::string ablation_table_csv(const std::vector<AblationRow>& rows);

}  // namespace ffvio
