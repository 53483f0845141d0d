#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "ffvio/bias_feedback.hpp"
#include "ffvio/imu.hpp"
#include "ffvio/landmark_map.hpp"
#include "ffvio/messages.hpp"
#include "ffvio/pose_solver.hpp"

namespace ffvio {

/// Raised when tracking has been lost for longer than the allowed interval.
class HardFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ZYX Euler angles (roll about x, pitch about y, yaw about world z).
struct EulerZYX {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

EulerZYX to_euler_zyx(const Quaternion& q);
Quaternion from_euler_zyx(const EulerZYX& e);

/// Keeps the yaw of `visual_guess` and takes roll and pitch from
/// `imu_attitude`. Returns `visual_guess` unchanged near gimbal lock.
Quaternion rollpitch_feedforward(const Quaternion& visual_guess, const Quaternion& imu_attitude);

struct KeyframeThresholds {
  double translation = 0.1;  // m
  double rotation = 0.2;     // rad
};

/// True for the first frame or when the motion since the last keyframe
/// exceeds either threshold.
bool keyframe_decision(const Transform& current, const std::optional<Transform>& last_keyframe,
                       const KeyframeThresholds& thresholds = {});

struct FrontendOptions {
  bool madgwick = true;
  bool feedforward = true;
  bool bias_feedback = true;
  bool iir = true;

  MadgwickConfig madgwick_config;
  double iir_coeff = 0.8;
  double bias_smoothing = 0.9;
  BiasLimits bias_limits;
  BiasEstimatorGuards bias_guards;
  KeyframeThresholds keyframe;
  RansacOptions ransac;
  DummyDepthRange dummy_depth;
  /// Largest distance between the stereo search seed and the match.
  double stereo_search_radius_px = 40.0;
  double max_lost_time = 0.5;  // s
  std::uint64_t seed = 0;
};

struct FrameInput {
  int frame_id = -1;
  double timestamp = 0.0;
  std::vector<StereoObservation> observations;
};

struct FrameResult {
  int frame_id = -1;
  double timestamp = 0.0;
  NavState state;
  /// IMU-propagated states in (previous frame, this frame).
  std::vector<NavState> imu_states;
  ImuBias bias;
  bool tracking_lost = false;
  bool low_confidence = false;
  int correspondences = 0;
  int inliers = 0;
  double reprojection_rms = 0.0;
  std::size_t map_size = 0;
  std::optional<KeyframeMessage> keyframe;
};

/// Per-frame visual-inertial estimator. Owns the landmark map, the IMU
/// propagator and the bias estimate.
class Frontend {
 public:
  Frontend(const CameraRig& rig, const NavState& initial, const FrontendOptions& options);

  /// `imu` must cover (previous frame time, frame time]; samples at or
  /// before the previous frame are skipped. Throws HardFailure.
  FrameResult process_frame(const FrameInput& frame, std::span<const ImuSample> imu);

  void apply_correction(const CorrectionMessage& msg);

  const NavState& state() const { return state_; }
  const ImuBias& bias() const { return bias_; }
  const LandmarkMap& map() const { return map_; }
  const CameraRig& rig() const { return rig_; }

 private:
  void recover_depth(const FrameInput& frame, const Transform& T_w_c0);
  std::optional<KeyframeMessage> maybe_keyframe(const FrameInput& frame);

  CameraRig rig_;
  FrontendOptions options_;
  NavState state_;
  ImuBias bias_;
  ImuPropagator propagator_;
  // gyro-only chain for bias estimation, so the accelerometer attitude
  // correction is not mistaken for gyro bias
  ImuPropagator raw_propagator_;
  LandmarkMap map_;
  std::mt19937_64 rng_;
  bool initialized_ = false;
  bool previous_lost_ = false;
  double lost_since_ = 0.0;
  std::optional<Transform> last_keyframe_pose_;
  int next_keyframe_id_ = 0;
  std::uint64_t corrections_applied_ = 0;
};

}  // namespace ffvio
