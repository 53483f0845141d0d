#include "ffvio/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace ffvio {

namespace {

void require_finite(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

}  // namespace

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-15) return identity();
  const Vec3 u = axis / n;
  const double s = std::sin(0.5 * angle);
  return Quaternion{std::cos(0.5 * angle), u.x() * s, u.y() * s, u.z() * s}.normalized();
}

Quaternion Quaternion::from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-8) {
    // second-order series keeps the map smooth near zero
    return Quaternion{1.0 - angle * angle / 8.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z()}
        .normalized();
  }
  return from_axis_angle(rv / angle, angle);
}

Quaternion Quaternion::from_matrix(const Mat3& R) {
  Quaternion q;
  const double trace = R.trace();
  if (trace > 0.0) {
    const double s = 0.5 / std::sqrt(trace + 1.0);
    q.w = 0.25 / s;
    q.x = (R(2, 1) - R(1, 2)) * s;
    q.y = (R(0, 2) - R(2, 0)) * s;
    q.z = (R(1, 0) - R(0, 1)) * s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
    q.w = (R(2, 1) - R(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (R(0, 1) + R(1, 0)) / s;
    q.z = (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2));
    q.w = (R(0, 2) - R(2, 0)) / s;
    q.x = (R(0, 1) + R(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (R(1, 2) + R(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1));
    q.w = (R(1, 0) - R(0, 1)) / s;
    q.x = (R(0, 2) + R(2, 0)) / s;
    q.y = (R(1, 2) + R(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized();
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

bool Quaternion::is_finite() const {
  return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

Quaternion Quaternion::normalized() const {
  const double n = norm();
  require_finite(is_finite() && n > 0.0, "Quaternion::normalized");
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::operator*(const Quaternion& r) const {
  return {w * r.w - x * r.x - y * r.y - z * r.z,
          w * r.x + x * r.w + y * r.z - z * r.y,
          w * r.y - x * r.z + y * r.w + z * r.x,
          w * r.z + x * r.y - y * r.x + z * r.w};
}

Vec3 Quaternion::rotate(const Vec3& v) const {
  // v' = v + 2 u x (u x v + w v)
  const Vec3 u = vec();
  const Vec3 t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

Vec3 Quaternion::to_rotation_vector() const {
  Quaternion q = *this;
  if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v / std::max(q.w, 1e-300);
  const double angle = 2.0 * std::atan2(s, q.w);
  return v * (angle / s);
}

bool same_rotation(const Quaternion& a, const Quaternion& b, double tol) {
  return angle_between(a, b) <= tol;
}

double angle_between(const Quaternion& a, const Quaternion& b) {
  return (a.conjugate() * b).to_rotation_vector().norm();
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat4 omega_matrix(const Vec3& omega) {
  const double wx = omega.x();
  const double wy = omega.y();
  const double wz = omega.z();
  Mat4 m;
  m << 0.0, -wx, -wy, -wz,
       wx,  0.0,  wz, -wy,
       wy, -wz,  0.0,  wx,
       wz,  wy, -wx,  0.0;
  return m;
}

Quaternion quat_integrate(const Quaternion& q, const Vec3& omega, double dt) {
  require_finite(q.is_finite() && omega.allFinite() && std::isfinite(dt), "quat_integrate");
  if (dt < 0.0) throw std::invalid_argument("quat_integrate: negative dt");
  const Vec4 next = q.coeffs() + 0.5 * omega_matrix(omega) * q.coeffs() * dt;
  return quaternion_from_coeffs(next).normalized();
}

Mat3 rotation_matrix(const Quaternion& q) {
  require_finite(q.is_finite(), "rotation_matrix");
  const double qw = q.w, qx = q.x, qy = q.y, qz = q.z;
  Mat3 R;
  R << 1 - 2 * qy * qy - 2 * qz * qz, 2 * qx * qy - 2 * qz * qw, 2 * qx * qz + 2 * qy * qw,
       2 * qx * qy + 2 * qz * qw, 1 - 2 * qx * qx - 2 * qz * qz, 2 * qy * qz - 2 * qx * qw,
       2 * qx * qz - 2 * qy * qw, 2 * qy * qz + 2 * qx * qw, 1 - 2 * qx * qx - 2 * qy * qy;
  return R;
}

Quaternion slerp(const Quaternion& qa, const Quaternion& qb_in, double t) {
  Vec4 a = qa.coeffs();
  Vec4 b = qb_in.coeffs();
  double d = a.dot(b);
  if (d < 0.0) {
    b = -b;
    d = -d;
  }
  if (d > 1.0 - 1e-9) {
    return quaternion_from_coeffs((1.0 - t) * a + t * b).normalized();
  }
  const double theta = std::acos(std::clamp(d, -1.0, 1.0));
  const double s = std::sin(theta);
  const Vec4 out = (std::sin((1.0 - t) * theta) / s) * a + (std::sin(t * theta) / s) * b;
  return quaternion_from_coeffs(out).normalized();
}

Transform Transform::from_matrix(const Mat4& m) {
  return {Quaternion::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Transform Transform::inverse() const {
  const Quaternion qi = rotation.inverse();
  return {qi, -qi.rotate(translation)};
}

Transform Transform::operator*(const Transform& rhs) const {
  return {(rotation * rhs.rotation).normalized(), rotation.rotate(rhs.translation) + translation};
}

Vec3 Transform::operator*(const Vec3& p) const { return rotation.rotate(p) + translation; }

Mat4 Transform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool Transform::is_finite() const { return rotation.is_finite() && translation.allFinite(); }

double rotation_angle(const Transform& T) { return T.rotation.to_rotation_vector().norm(); }

namespace {

// Left Jacobian of SO(3) and its inverse.
Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  if (theta < 1e-7) return Mat3::Identity() + 0.5 * K + K * K / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  if (theta < 1e-7) return Mat3::Identity() - 0.5 * K + K * K / 12.0;
  const double half = 0.5 * theta;
  const double coeff = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  return Mat3::Identity() - 0.5 * K + coeff * K * K;
}

}  // namespace

Transform se3_exp(const Vec6& xi) {
  const Vec3 phi = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  return {Quaternion::from_rotation_vector(phi), so3_left_jacobian(phi) * rho};
}

Vec6 se3_log(const Transform& T) {
  const Vec3 phi = T.rotation.to_rotation_vector();
  Vec6 xi;
  xi.head<3>() = phi;
  xi.tail<3>() = so3_left_jacobian_inverse(phi) * T.translation;
  return xi;
}

Transform retract(const Transform& T, const Vec6& delta) {
  return {(T.rotation * Quaternion::from_rotation_vector(delta.head<3>())).normalized(),
          T.translation + T.rotation.rotate(delta.tail<3>())};
}

void Trajectory::push_back(double timestamp, const Transform& pose) {
  if (!std::isfinite(timestamp)) throw std::invalid_argument("Trajectory: non-finite timestamp");
  if (!poses_.empty() && !(timestamp > poses_.back().timestamp)) {
    throw std::invalid_argument("Trajectory: timestamps must be strictly increasing");
  }
  poses_.push_back({timestamp, pose});
}

double Trajectory::path_length() const {
  double length = 0.0;
  for (std::size_t i = 1; i < poses_.size(); ++i) {
    length += (poses_[i].pose.translation - poses_[i - 1].pose.translation).norm();
  }
  return length;
}

Trajectory Trajectory::transformed(const Transform& T) const {
  Trajectory out;
  for (const auto& sp : poses_) out.push_back(sp.timestamp, T * sp.pose);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                           const Trajectory& gt,
                                                           double tolerance) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (gt.empty()) return pairs;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    while (j + 1 < gt.size() && std::abs(gt[j + 1].timestamp - t) <= std::abs(gt[j].timestamp - t)) {
      ++j;
    }
    if (std::abs(gt[j].timestamp - t) <= tolerance) pairs.emplace_back(i, j);
  }
  return pairs;
}

Transform umeyama_align(std::span<const Vec3> est, std::span<const Vec3> gt) {
  if (est.size() != gt.size()) throw AlignmentError("umeyama_align: size mismatch");
  const std::size_t n = est.size();
  if (n < 3) throw AlignmentError("umeyama_align: need at least three points");

  Vec3 mean_est = Vec3::Zero();
  Vec3 mean_gt = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mean_est += est[i];
    mean_gt += gt[i];
  }
  mean_est /= static_cast<double>(n);
  mean_gt /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (gt[i] - mean_gt) * (est[i] - mean_est).transpose();
    spread += (est[i] - mean_est).squaredNorm() + (gt[i] - mean_gt).squaredNorm();
  }
  cov /= static_cast<double>(n);
  spread /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (spread < 1e-18 || sv[1] <= 1e-10 * sv[0]) {
    throw AlignmentError("umeyama_align: degenerate (collinear) point set");
  }
  Mat3 S = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S(2, 2) = -1.0;
  const Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
  return {Quaternion::from_matrix(R), mean_gt - R * mean_est};
}

Transform umeyama_align(const Trajectory& est, const Trajectory& gt) {
  const auto pairs = associate(est, gt);
  std::vector<Vec3> e;
  std::vector<Vec3> g;
  e.reserve(pairs.size());
  g.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    e.push_back(est[i].pose.translation);
    g.push_back(gt[j].pose.translation);
  }
  return umeyama_align(e, g);
}

}  // namespace ffvio
