#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "ffvio/camera.hpp"

namespace ffvio {

/// Fewer than four usable correspondences.
class TrackingLost : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// World point and its measured pixel.
struct Correspondence {
  Vec3 point_w = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
};

using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// e = m - pi(T_w_c^-1 X). Jacobians are with respect to the increment of
/// retract(T_w_c, delta) and to the world point.
struct ReprojectionTerm {
  Vec2 error = Vec2::Zero();
  Mat26 d_pose = Mat26::Zero();
  Mat23 d_point = Mat23::Zero();
  bool in_front = false;
};

ReprojectionTerm reprojection_term(const PinholeIntrinsics& cam, const Transform& T_w_c,
                                   const Vec3& point_w, const Vec2& pixel);

/// Same residual for a camera rigidly mounted at T_c0_c on the rig whose
/// pose T_w_c0 is the variable. d_pose is taken with respect to T_w_c0.
ReprojectionTerm reprojection_term(const PinholeIntrinsics& cam, const Transform& T_w_c0,
                                   const Transform& T_c0_c, const Vec3& point_w,
                                   const Vec2& pixel);

/// rho(s) for a squared error s: s inside delta^2, 2 delta sqrt(s) - delta^2 outside.
double huber(double squared_error, double delta);
/// d rho / d s
double huber_weight(double squared_error, double delta);

struct PoseRefineOptions {
  int max_iterations = 10;
  /// Huber threshold in px; zero disables the robust kernel.
  double huber_delta = 1.0;
  double relative_tolerance = 1e-8;
};

struct PoseRefineResult {
  Transform pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Robust cost of a camera pose over fixed points.
double pose_cost(const PinholeIntrinsics& cam, const Transform& T_w_c,
                 std::span<const Correspondence> corr, double huber_delta);

/// Pose-only Gauss-Newton with landmarks fixed. A step that raises the cost
/// is retried with Levenberg damping; three failed steps in a row end the
/// solve with `diverged` set. The returned pose never has a higher cost than
/// `guess`.
PoseRefineResult refine_pose(const PinholeIntrinsics& cam, const Transform& guess,
                             std::span<const Correspondence> corr,
                             const PoseRefineOptions& options = {});

/// In-frame bundle adjustment: refine_pose with Huber 1 px and at most
/// ten iterations.
PoseRefineResult inframe_ba(const PinholeIntrinsics& cam, const Transform& guess,
                            std::span<const Correspondence> corr);

struct RansacOptions {
  int iterations = 100;
  double inlier_threshold_px = 3.0;
  int min_confident_inliers = 10;
};

struct PnpResult {
  Transform pose;
  std::vector<bool> inliers;
  int inlier_count = 0;
  bool low_confidence = false;
};

/// True when the points are collinear or coincident.
bool degenerate_set(std::span<const Vec3> points);

/// RANSAC over four-point subsets, each solved by Gauss-Newton from
/// `initial`. The inliers of the best hypothesis are then refined together,
/// again starting from `initial`. Throws
/// TrackingLost with fewer than four correspondences or when every sample
/// is degenerate.
PnpResult ransac_pnp(const PinholeIntrinsics& cam, std::span<const Correspondence> corr,
                     const Transform& initial, std::mt19937_64& rng,
                     const RansacOptions& options = {});

}  // namespace ffvio
