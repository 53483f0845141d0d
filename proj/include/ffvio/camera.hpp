#pragma once

#include <optional>

#include "ffvio/geometry.hpp"

namespace ffvio {

struct PinholeIntrinsics {
  double fx = 458.0;
  double fy = 458.0;
  double cx = 376.0;
  double cy = 240.0;
  int width = 752;
  int height = 480;

  /// Pixel of a camera-frame point; z must be positive.
  Vec2 project(const Vec3& p_c) const { return {fx * p_c.x() / p_c.z() + cx, fy * p_c.y() / p_c.z() + cy}; }
  /// Ray through a pixel, normalized to z = 1.
  Vec3 unproject(const Vec2& px) const { return {(px.x() - cx) / fx, (px.y() - cy) / fy, 1.0}; }
  bool in_bounds(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 && px.y() <= height - 1.0;
  }
  /// d project / d p_c
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p_c) const;
};

/// Stereo rig. T_c0_c1 maps camera1 coordinates into camera0; T_i_c0 maps
/// camera0 coordinates into the IMU frame.
struct CameraRig {
  PinholeIntrinsics cam0;
  PinholeIntrinsics cam1;
  Transform T_c0_c1;
  Transform T_i_c0;

  double baseline() const { return T_c0_c1.translation.norm(); }
  /// Throws std::invalid_argument on non-positive focal lengths or baseline.
  void validate() const;

  /// 458 px focal length, 752x480, 0.11 m baseline, forward-looking camera
  /// on a forward-left-up IMU body.
  static CameraRig euroc_like();
};

/// Pixel of world point `p_w` seen from camera pose T_w_c, if in front.
std::optional<Vec2> project_point(const PinholeIntrinsics& cam, const Transform& T_w_c, const Vec3& p_w);

}  // namespace ffvio
