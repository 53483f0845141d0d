#pragma once

#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ffvio/camera.hpp"
#include "ffvio/messages.hpp"
#include "ffvio/pose_solver.hpp"

namespace ffvio {

/// Sorted, duplicate-free set of landmark ids seen by a keyframe.
struct PlaceSignature {
  int keyframe_id = -1;
  std::vector<int> landmark_ids;

  static PlaceSignature from_ids(int keyframe_id, std::vector<int> ids);
};

/// |a & b| / max(|a|, |b|); zero when either is empty.
double similarity(const PlaceSignature& a, const PlaceSignature& b);

struct LoopDetectorOptions {
  std::size_t temporal_guard = 20;
  double min_score = 0.2;
  double min_predecessor_score = 0.15;
  std::size_t predecessors = 3;
};

/// Index into `database` (oldest first) of the loop candidate for `query`,
/// or nothing. The newest `temporal_guard` entries are ignored.
std::optional<std::size_t> detect_loop(const PlaceSignature& query,
                                       std::span<const PlaceSignature> database,
                                       const LoopDetectorOptions& options = {});

struct GeometryThresholds {
  double max_translation = 3.0;  // m
  double max_rotation = 1.0471975511965976;  // 60 deg
  int min_inliers = 30;  // exclusive
};

/// Pass rule on a relative motion and its inlier count: translation below
/// 3 m, rotation below 60 degrees and more than 30 inliers.
bool geometry_gate(const Transform& relative, int inliers, const GeometryThresholds& t = {});

struct GeometryCheck {
  bool pass = false;
  /// T_c_m^-1 * T_c_n, camera-0 frames of candidate m and query n
  Transform relative;
  /// Query camera pose recovered from the candidate's landmarks.
  Transform query_pose;
  int inliers = 0;
};

/// RANSAC PnP of the candidate's landmarks against the query's pixels,
/// starting from `query_guess` (T_w_c0 of the query).
GeometryCheck geometry_check(const PinholeIntrinsics& cam, const Transform& candidate_pose,
                             std::span<const Correspondence> shared, const Transform& query_guess,
                             std::mt19937_64& rng, const GeometryThresholds& thresholds = {});

struct PoseGraphEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  /// Measured T_from^-1 * T_to.
  Transform measurement;
  bool loop = false;
};

struct PoseGraph {
  std::vector<Transform> vertices;
  std::vector<PoseGraphEdge> edges;

  void add_adjacent(std::size_t a, std::size_t b, const Transform& z) { edges.push_back({a, b, z, false}); }
  void add_loop(std::size_t a, std::size_t b, const Transform& z) { edges.push_back({a, b, z, true}); }
  void validate() const;
};

/// e = Log(Z^-1 * T_m^-1 * T_n)
Vec6 pose_graph_residual(const Transform& T_m, const Transform& T_n, const Transform& z);

struct PoseGraphOptions {
  int max_iterations = 50;
  double relative_tolerance = 1e-9;
  /// stop once no pose moves by more than this (m or rad)
  double step_tolerance = 1e-12;
  double loop_huber_delta = 1.0;
};

/// Adjacent terms e'e plus Huber on loop terms.
double pose_graph_cost(const PoseGraph& graph, std::span<const Transform> poses,
                       const PoseGraphOptions& options = {});

struct PoseGraphResult {
  bool success = false;
  std::vector<Transform> poses;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> cost_history;
};

/// Sparse Gauss-Newton with the first vertex fixed. Falls back to damped
/// steps when a step would raise the cost; on failure the input poses are
/// returned unchanged.
PoseGraphResult pose_graph_optimize(const PoseGraph& graph, const PoseGraphOptions& options = {});

struct ArchivedKeyframe {
  int keyframe_id = -1;
  double timestamp = 0.0;
  Transform pose;  // body pose T_w_i
  std::map<int, Vec3> landmarks;
  std::map<int, Vec2> pixels;
  PlaceSignature signature;
};

struct LoopEvent {
  int query_keyframe_id = -1;
  int candidate_keyframe_id = -1;
  bool accepted = false;
  int inliers = 0;
  double score = 0.0;
};

/// Keyframe archive, place recognition and pose-graph correction.
class LoopCloser {
 public:
  struct Options {
    LoopDetectorOptions detector;
    GeometryThresholds geometry;
    PoseGraphOptions graph;
    std::uint64_t seed = 0;
  };

  LoopCloser(const CameraRig& rig, const Options& options);

  /// Archives the keyframe and, on an accepted loop, returns the correction
  /// of the newest keyframe. The geometry check matches the candidate's
  /// landmarks at their newest archived estimate.
  std::optional<CorrectionMessage> process(const KeyframeMessage& kf);

  int accepted() const { return accepted_; }
  int rejected() const { return rejected_; }
  const std::vector<ArchivedKeyframe>& archive() const { return archive_; }
  const std::vector<LoopEvent>& events() const { return events_; }

  /// Dense similarity between every pair of archived keyframes.
  std::vector<std::vector<double>> similarity_matrix() const;

 private:
  CameraRig rig_;
  Options options_;
  std::mt19937_64 rng_;
  std::vector<ArchivedKeyframe> archive_;
  std::vector<PlaceSignature> signatures_;
  PoseGraph graph_;
  /// landmark id -> archive index of the newest keyframe holding it
  std::map<int, std::size_t> last_seen_;
  std::vector<LoopEvent> events_;
  int accepted_ = 0;
  int rejected_ = 0;
};

}  // namespace ffvio
