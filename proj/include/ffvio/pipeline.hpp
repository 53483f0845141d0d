#pragma once

#include <string>
#include <vector>

#include "ffvio/scenario_config.hpp"

namespace ffvio {

struct StageTimes {
  double frontend = 0.0;      // s
  double backend = 0.0;       // s
  double loop_closure = 0.0;  // s
};

struct FrameDiagnostics {
  int frame_id = -1;
  double timestamp = 0.0;
  bool tracking_lost = false;
  bool low_confidence = false;
  int correspondences = 0;
  int inliers = 0;
  double reprojection_rms = 0.0;
  std::size_t map_size = 0;
  ImuBias bias;
  bool keyframe = false;
};

struct PipelineOutput {
  /// Body poses at frame times.
  Trajectory estimate;
  /// Body poses at IMU times: propagated between frames, visual at frames.
  Trajectory estimate_imu_rate;
  std::vector<FrameDiagnostics> frames;
  bool hard_failure = false;
  std::string failure_message;
  int keyframes = 0;
  int window_runs = 0;
  int window_failures = 0;
  int corrections_applied = 0;
  int loops_accepted = 0;
  int loops_rejected = 0;
  std::vector<LoopEvent> loop_events;
  std::vector<std::vector<double>> similarity;
  std::vector<Landmark> final_landmarks;
  StageTimes timing;
};

/// Runs frontend, sliding window and loop closure over a stream, inline on
/// the calling thread or on three threads joined by bounded queues.
PipelineOutput run_pipeline(const MeasurementStream& stream, const CameraRig& rig,
                            const EstimatorConfig& config);

}  // namespace ffvio
