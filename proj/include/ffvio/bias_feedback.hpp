#pragma once

#include <optional>
#include <vector>

#include "ffvio/imu.hpp"

namespace ffvio {

/// Visual states at two consecutive frames A and B, plus the IMU-propagated
/// states at every IMU timestamp in (t_A, t_B]. The IMU chain starts from
/// visual_a.
struct InterframeRecord {
  NavState visual_a;
  NavState visual_b;
  std::vector<NavState> imu_states;

  void validate() const;
};

struct BiasEstimatorGuards {
  double max_gyro_angle = 0.3;     // rad between visual and IMU attitude
  double max_velocity_gap = 1.0;   // m/s between IMU and visual velocity
};

/// b_w = 2 vec(q_visual^-1 (x) q_imu) / elapsed. Empty when the two
/// attitudes differ by more than `max_angle`.
std::optional<Vec3> estimate_gyro_bias(const Quaternion& q_visual, const Quaternion& q_imu,
                                       double elapsed, double max_angle = 0.3);

/// b_a = R(q_visual^-1) (v_imu - v_visual) / elapsed. Empty when the
/// velocity gap exceeds `max_gap`.
std::optional<Vec3> estimate_accel_bias(const Quaternion& q_visual, const Vec3& v_imu,
                                        const Vec3& v_visual, double elapsed,
                                        double max_gap = 1.0);

/// Interpolated state halfway between two frames: finite-difference
/// velocity, slerp orientation, midpoint position and time.
NavState middle_state(const NavState& frame_a, const NavState& frame_b);

struct BiasUpdate {
  ImuBias bias;
  bool gyro_accepted = false;
  bool accel_accepted = false;
};

/// Estimates the residual biases left in the IMU chain of `record`, adds them
/// to `current`, and blends: smoothing * current + (1 - smoothing) * estimate.
/// Rejected components keep their current value.
BiasUpdate update_bias(const InterframeRecord& record, const ImuBias& current, double smoothing,
                       const BiasLimits& limits = {}, const BiasEstimatorGuards& guards = {});

}  // namespace ffvio
