#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace ffvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hamilton quaternion, scalar first. Public operations that return a
/// Quaternion return it normalized unless stated otherwise.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
  static Quaternion from_rotation_vector(const Vec3& rotation_vector);
  static Quaternion from_matrix(const Mat3& R);

  Vec3 vec() const { return {x, y, z}; }
  Vec4 coeffs() const { return {w, x, y, z}; }
  double norm() const;
  bool is_finite() const;

  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  /// Inverse of a unit quaternion.
  Quaternion inverse() const { return conjugate(); }

  Quaternion operator*(const Quaternion& rhs) const;
  Vec3 rotate(const Vec3& v) const;

  /// Logarithm map: rotation vector with angle in [0, pi].
  Vec3 to_rotation_vector() const;
};

/// Raw quaternion (not normalized) from four coefficients, w first.
inline Quaternion quaternion_from_coeffs(const Vec4& c) { return {c[0], c[1], c[2], c[3]}; }

/// True when a and b describe the same rotation (handles q / -q).
bool same_rotation(const Quaternion& a, const Quaternion& b, double tol = 1e-9);

/// Geodesic angle between two rotations, in [0, pi].
double angle_between(const Quaternion& a, const Quaternion& b);

Mat3 skew(const Vec3& v);

/// Quaternion integration matrix: omega_matrix(w) * q == q (x) (0, w).
Mat4 omega_matrix(const Vec3& omega);

/// One first-order integration step q + 0.5 * Omega(omega) * q * dt,
/// renormalized.
Quaternion quat_integrate(const Quaternion& q, const Vec3& omega, double dt);

/// Rotation matrix of a unit quaternion, written entrywise.
Mat3 rotation_matrix(const Quaternion& q);

/// Spherical linear interpolation along the shortest arc.
Quaternion slerp(const Quaternion& qa, const Quaternion& qb, double t);

/// Rigid transform. `T_a_b` maps b-frame coordinates into frame a.
struct Transform {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }
  static Transform from_matrix(const Mat4& m);

  Transform inverse() const;
  Transform operator*(const Transform& rhs) const;
  Vec3 operator*(const Vec3& p) const;

  Mat3 rotation_matrix() const { return ffvio::rotation_matrix(rotation); }
  Mat4 matrix() const;
  bool is_finite() const;
};

/// Geodesic angle of the rotation part, in [0, pi].
double rotation_angle(const Transform& T);

/// SE(3) exponential. xi = (rotation vector, translational part).
Transform se3_exp(const Vec6& xi);
/// SE(3) logarithm, inverse of se3_exp; ordering (rotation, translation).
Vec6 se3_log(const Transform& T);

/// Compose a small increment onto T from the right: rotation by
/// Exp(delta.head<3>) and translation by R * delta.tail<3>.
Transform retract(const Transform& T, const Vec6& delta);

struct StampedPose {
  double timestamp = 0.0;
  Transform pose;
};

/// Timestamped pose sequence with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;

  void push_back(double timestamp, const Transform& pose);
  void push_back(const StampedPose& sp) { push_back(sp.timestamp, sp.pose); }

  const std::vector<StampedPose>& poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const StampedPose& operator[](std::size_t i) const { return poses_[i]; }
  auto begin() const { return poses_.begin(); }
  auto end() const { return poses_.end(); }

  /// Sum of translation increments between consecutive poses.
  double path_length() const;

  /// Pose-wise left multiplication T * pose_i.
  Trajectory transformed(const Transform& T) const;

 private:
  std::vector<StampedPose> poses_;
};

/// Nearest-timestamp association. Returns (est index, gt index) pairs whose
/// stamps differ by at most `tolerance` seconds.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                           const Trajectory& gt,
                                                           double tolerance = 0.01);

/// Closed-form rigid alignment S minimizing sum |S * est_i - gt_i|^2.
/// Throws AlignmentError for fewer than three points or collinear sets.
Transform umeyama_align(std::span<const Vec3> est, std::span<const Vec3> gt);

/// Associates the two trajectories by timestamp and aligns their positions.
Transform umeyama_align(const Trajectory& est, const Trajectory& gt);

}  // namespace ffvio
