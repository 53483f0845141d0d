#pragma once

#include <stdexcept>

#include "ffvio/geometry.hpp"

namespace ffvio {

/// Gravity in the ENU world frame; gravity points along -z.
inline const Vec3 kGravity{0.0, 0.0, 9.81};

/// Raw inertial readout in the body frame. accel is specific force.
struct ImuSample {
  double timestamp = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

struct ImuBias {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Caps beyond which a bias value is treated as implausible.
struct BiasLimits {
  double accel = 1.0;  // m/s^2
  double gyro = 0.5;   // rad/s
};

bool is_plausible(const ImuBias& bias, const BiasLimits& limits = {});

/// Body-to-world orientation, world position and world velocity.
struct NavState {
  Quaternion q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double timestamp = 0.0;

  /// T_w_i
  Transform pose() const { return {q, p}; }
};

struct MadgwickConfig {
  double fuse_weight = 0.1;
  double accel_gate = 0.2;  // m/s^2, allowed | |a| - g |
  double gravity_magnitude = 9.81;
};

/// Raised when the time step between consecutive samples is outside (0, 0.1] s.
class PropagationGap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxPropagationStep = 0.1;

ImuSample apply_bias(const ImuSample& sample, const ImuBias& bias);

/// Dead-reckoning step with a bias-compensated sample:
///   q' = normalize(q + 0.5 Omega(w) q dt)
///   p' = p + v dt
///   v' = v + (R(q) a - g) dt      (R of the pre-update orientation)
NavState propagate(const NavState& state, const ImuSample& sample, double dt);

struct MadgwickObjective {
  Vec3 residual = Vec3::Zero();
  /// d residual / d (qw, qx, qy, qz)
  Eigen::Matrix<double, 3, 4> jacobian = Eigen::Matrix<double, 3, 4>::Zero();
};

/// Gravity-alignment objective f(q) = R(q*) (0,0,1)^T - a for unit accel a.
MadgwickObjective madgwick_objective(const Quaternion& q, const Vec3& accel_normalized);

/// Gyro integration fused with one normalized gradient-descent step on the
/// gravity-alignment objective. The correction is skipped when the
/// accelerometer norm is outside the gate or the gradient vanishes.
Quaternion fused_orientation_step(const NavState& state, const ImuSample& sample, double dt,
                                  const MadgwickConfig& cfg);

/// Owns a NavState and advances it sample by sample.
class ImuPropagator {
 public:
  struct Options {
    bool madgwick = true;
    MadgwickConfig madgwick_config;
  };

  ImuPropagator() = default;
  ImuPropagator(const NavState& initial, const Options& options);

  void reset(const NavState& state) { state_ = state; }
  void set_bias(const ImuBias& bias) { bias_ = bias; }
  const ImuBias& bias() const { return bias_; }
  const NavState& state() const { return state_; }

  /// Consumes one raw sample; dt is taken from the sample timestamp.
  const NavState& integrate(const ImuSample& raw);

 private:
  NavState state_;
  ImuBias bias_;
  Options options_;
};

}  // namespace ffvio
