#pragma once

#include <deque>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "ffvio/camera.hpp"
#include "ffvio/messages.hpp"

namespace ffvio {

struct WindowKeyframe {
  int keyframe_id = -1;
  double timestamp = 0.0;
  /// camera-0 pose T_w_c0
  Transform pose;
  /// landmark id -> camera-0 pixel
  std::map<int, Vec2> observations;
  /// landmark id -> camera-1 pixel, for the stereo-matched subset
  std::map<int, Vec2> observations_c1;
  bool fixed = false;
};

/// Keyframe id and landmark id of one reprojection edge.
using EdgeKey = std::pair<int, int>;

/// Fixed-capacity window of the most recent keyframes; the oldest one is the
/// gauge anchor.
class SlidingWindow {
 public:
  explicit SlidingWindow(const CameraRig& rig, std::size_t capacity = 8);

  /// Appends a keyframe, evicting the oldest when over capacity. Landmark
  /// positions are taken from the newest snapshot. Throws
  /// std::invalid_argument for a keyframe that is not newer than the last.
  void insert(const KeyframeMessage& kf);

  const std::deque<WindowKeyframe>& keyframes() const { return keyframes_; }
  std::deque<WindowKeyframe>& keyframes() { return keyframes_; }
  const std::map<int, Vec3>& landmarks() const { return landmarks_; }
  std::map<int, Vec3>& landmarks() { return landmarks_; }
  std::size_t size() const { return keyframes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const CameraRig& rig() const { return rig_; }

  /// Observation mask entry: identity (true) when keyframe `keyframe_id`
  /// observes `landmark_id`.
  bool observed(int keyframe_id, int landmark_id) const;
  /// Number of window keyframes observing the landmark.
  int observation_count(int landmark_id) const;

  /// Left-multiplies every pose and landmark by `correction`.
  void apply_correction(const Transform& correction);

 private:
  void drop_unobserved_landmarks();

  CameraRig rig_;
  std::size_t capacity_;
  std::deque<WindowKeyframe> keyframes_;
  std::map<int, Vec3> landmarks_;
};

struct WindowOptimizeOptions {
  int stage_iterations = 10;
  double outlier_threshold_px = 3.0;
  double huber_delta = 1.0;
  double initial_lambda = 1e-4;
  int max_damping_attempts = 12;
  int min_multiview_landmarks = 10;
};

struct WindowIteration {
  int iteration = 0;
  int stage = 1;
  double cost = 0.0;
  int active_edges = 0;
};

struct WindowOptimizeResult {
  bool success = false;
  int iterations = 0;
  std::vector<Transform> poses_before;
  std::vector<Transform> poses_after;
  std::set<EdgeKey> rejected;
  double stage1_cost = 0.0;
  double stage2_cost = 0.0;
  double inlier_rms = 0.0;
  std::vector<WindowIteration> history;
  std::vector<std::pair<int, Vec3>> refined_landmarks;
};

/// Robust reprojection cost of the window over active edges.
double window_cost(const SlidingWindow& window, const std::set<EdgeKey>& rejected,
                   double huber_delta);

/// Two-stage Gauss-Newton over the non-fixed poses and multi-view landmarks,
/// with landmarks eliminated by Schur complement. After the first stage,
/// edges whose error exceeds the outlier threshold are deactivated. On
/// success the window holds the refined values; otherwise it is untouched.
WindowOptimizeResult optimize_window(SlidingWindow& window, const WindowOptimizeOptions& options = {});

/// Correction T_newest_after * T_newest_before^-1 and the refined landmarks.
/// The window stores camera poses; the correction is the same for the body
/// pose because the extrinsic cancels.
CorrectionMessage emit_correction(const WindowOptimizeResult& result, int reference_keyframe_id);

}  // namespace ffvio
