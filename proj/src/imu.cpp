#include "ffvio/imu.hpp"

#include <cmath>
#include <string>

namespace ffvio {

namespace {

void check_step(double dt) {
  if (!(dt > 0.0) || dt > kMaxPropagationStep) {
    throw PropagationGap("IMU step " + std::to_string(dt) + " s outside (0, 0.1]");
  }
}

}  // namespace

bool is_plausible(const ImuBias& bias, const BiasLimits& limits) {
  return bias.accel.allFinite() && bias.gyro.allFinite() && bias.accel.norm() <= limits.accel &&
         bias.gyro.norm() <= limits.gyro;
}

ImuSample apply_bias(const ImuSample& sample, const ImuBias& bias) {
  return {sample.timestamp, sample.accel - bias.accel, sample.gyro - bias.gyro};
}

NavState propagate(const NavState& state, const ImuSample& sample, double dt) {
  check_step(dt);
  if (!sample.accel.allFinite() || !sample.gyro.allFinite()) {
    throw std::invalid_argument("propagate: non-finite sample");
  }
  NavState next;
  next.q = quat_integrate(state.q, sample.gyro, dt);
  next.p = state.p + state.v * dt;
  next.v = state.v + (rotation_matrix(state.q) * sample.accel - kGravity) * dt;
  next.timestamp = state.timestamp + dt;
  return next;
}

MadgwickObjective madgwick_objective(const Quaternion& q, const Vec3& a) {
  if (!(a.norm() > 0.0) || !a.allFinite()) {
    throw std::invalid_argument("madgwick_objective: zero or non-finite acceleration");
  }
  const double qw = q.w, qx = q.x, qy = q.y, qz = q.z;
  MadgwickObjective out;
  // R(q*) * (0,0,1)^T expanded: the gravity direction seen in the body frame.
  out.residual << 2.0 * (qx * qz - qw * qy) - a.x(),
                  2.0 * (qw * qx + qy * qz) - a.y(),
                  1.0 - 2.0 * qx * qx - 2.0 * qy * qy - a.z();
  out.jacobian << -2.0 * qy,  2.0 * qz, -2.0 * qw, 2.0 * qx,
                   2.0 * qx,  2.0 * qw,  2.0 * qz, 2.0 * qy,
                   0.0,      -4.0 * qx, -4.0 * qy, 0.0;
  return out;
}

Quaternion fused_orientation_step(const NavState& state, const ImuSample& sample, double dt,
                                  const MadgwickConfig& cfg) {
  if (!(dt > 0.0)) throw std::invalid_argument("fused_orientation_step: dt must be positive");
  const Vec4 q = state.q.coeffs();
  Vec4 q_dot = 0.5 * omega_matrix(sample.gyro) * q;

  const double a_norm = sample.accel.norm();
  if (a_norm > 0.0 && std::abs(a_norm - cfg.gravity_magnitude) < cfg.accel_gate) {
    const auto obj = madgwick_objective(state.q, sample.accel / a_norm);
    const Vec4 gradient = obj.jacobian.transpose() * obj.residual;
    const double g_norm = gradient.norm();
    if (g_norm >= 1e-12) q_dot -= cfg.fuse_weight * gradient / g_norm;
  }
  return quaternion_from_coeffs(q + q_dot * dt).normalized();
}

ImuPropagator::ImuPropagator(const NavState& initial, const Options& options)
    : state_(initial), options_(options) {}

const NavState& ImuPropagator::integrate(const ImuSample& raw) {
  const double dt = raw.timestamp - state_.timestamp;
  const ImuSample s = apply_bias(raw, bias_);
  NavState next = propagate(state_, s, dt);
  if (options_.madgwick) next.q = fused_orientation_step(state_, s, dt, options_.madgwick_config);
  next.timestamp = raw.timestamp;
  state_ = next;
  return state_;
}

}  // namespace ffvio
