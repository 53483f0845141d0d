#include "ffvio/bias_feedback.hpp"

#include <cmath>
#include <stdexcept>

namespace ffvio {

void InterframeRecord::validate() const {
  if (!(visual_b.timestamp > visual_a.timestamp)) {
    throw std::invalid_argument("InterframeRecord: t_B must be after t_A");
  }
  double prev = visual_a.timestamp;
  for (const auto& s : imu_states) {
    if (!(s.timestamp > prev) || s.timestamp > visual_b.timestamp + 1e-9) {
      throw std::invalid_argument("InterframeRecord: IMU states outside (t_A, t_B] or unordered");
    }
    prev = s.timestamp;
  }
}

std::optional<Vec3> estimate_gyro_bias(const Quaternion& q_visual, const Quaternion& q_imu,
                                       double elapsed, double max_angle) {
  if (!(elapsed > 0.0)) throw std::invalid_argument("estimate_gyro_bias: elapsed must be positive");
  Quaternion dq = q_visual.inverse() * q_imu;
  if (dq.w < 0.0) dq = {-dq.w, -dq.x, -dq.y, -dq.z};
  if (dq.to_rotation_vector().norm() >= max_angle) return std::nullopt;
  return Vec3(2.0 * dq.vec() / elapsed);
}

std::optional<Vec3> estimate_accel_bias(const Quaternion& q_visual, const Vec3& v_imu,
                                        const Vec3& v_visual, double elapsed, double max_gap) {
  if (!(elapsed > 0.0)) {
    throw std::invalid_argument("estimate_accel_bias: elapsed must be positive");
  }
  const Vec3 gap = v_imu - v_visual;
  if (!(gap.norm() < max_gap)) return std::nullopt;
  return Vec3(rotation_matrix(q_visual.inverse()) * gap / elapsed);
}

NavState middle_state(const NavState& a, const NavState& b) {
  const double dt = b.timestamp - a.timestamp;
  if (!(dt > 0.0)) throw std::invalid_argument("middle_state: zero or negative interval");
  NavState m;
  m.v = (b.p - a.p) / dt;
  m.q = slerp(a.q, b.q, 0.5);
  m.p = 0.5 * (a.p + b.p);
  m.timestamp = 0.5 * (a.timestamp + b.timestamp);
  return m;
}

BiasUpdate update_bias(const InterframeRecord& record, const ImuBias& current, double smoothing,
                       const BiasLimits& limits, const BiasEstimatorGuards& guards) {
  BiasUpdate out{current, false, false};
  if (record.imu_states.empty()) return out;
  record.validate();
  if (smoothing < 0.0 || smoothing > 1.0) {
    throw std::invalid_argument("update_bias: smoothing must lie in [0, 1]");
  }
  const double t_a = record.visual_a.timestamp;

  const NavState& last = record.imu_states.back();
  if (auto residual = estimate_gyro_bias(record.visual_b.q, last.q, last.timestamp - t_a,
                                         guards.max_gyro_angle)) {
    const Vec3 estimate = current.gyro + *residual;
    if (estimate.allFinite() && estimate.norm() <= limits.gyro) {
      out.bias.gyro = smoothing * current.gyro + (1.0 - smoothing) * estimate;
      out.gyro_accepted = true;
    }
  }

  const NavState mid = middle_state(record.visual_a, record.visual_b);
  const NavState* nearest = &record.imu_states.front();
  for (const auto& s : record.imu_states) {
    if (std::abs(s.timestamp - mid.timestamp) < std::abs(nearest->timestamp - mid.timestamp)) {
      nearest = &s;
    }
  }
  if (auto residual = estimate_accel_bias(mid.q, nearest->v, mid.v, nearest->timestamp - t_a,
                                          guards.max_velocity_gap)) {
    const Vec3 estimate = current.accel + *residual;
    if (estimate.allFinite() && estimate.norm() <= limits.accel) {
      out.bias.accel = smoothing * current.accel + (1.0 - smoothing) * estimate;
      out.accel_accepted = true;
    }
  }
  return out;
}

}  // namespace ffvio
