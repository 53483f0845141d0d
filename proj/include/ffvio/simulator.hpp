#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ffvio/camera.hpp"
#include "ffvio/frontend.hpp"
#include "ffvio/imu.hpp"

namespace ffvio {

enum class TrajectoryKind { Figure8, Circle, Line, Static, Spline };

std::string to_string(TrajectoryKind kind);
/// Throws std::invalid_argument for an unknown name.
TrajectoryKind trajectory_kind_from_string(const std::string& name);

struct TrajectoryConfig {
  TrajectoryKind kind = TrajectoryKind::Figure8;
  double radius = 1.0;    // m; lobe radius for the figure-8
  double speed = 1.0;     // m/s; mean speed along the path
  double duration = 31.0; // s
  Vec3 center{0.0, 0.0, 1.0};
  /// Line direction in the horizontal plane (normalized on use).
  Vec3 direction{1.0, 0.0, 0.0};
  /// Spline waypoints; passed at constant speed between chord-length knots.
  std::vector<Vec3> waypoints;
  /// Fixed heading instead of heading-follows-velocity.
  std::optional<double> fixed_yaw;
  /// Initial attitude tilt (roll, pitch) for static scenarios.
  double roll = 0.0;
  double pitch = 0.0;
};

struct ImuNoiseConfig {
  double rate = 200.0;                // Hz
  double gyro_noise_density = 0.0;    // rad/s/sqrt(Hz)
  double accel_noise_density = 0.0;   // m/s^2/sqrt(Hz)
  double gyro_random_walk = 0.0;      // rad/s^2/sqrt(Hz)
  double accel_random_walk = 0.0;     // m/s^3/sqrt(Hz)
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
};

struct CameraNoiseConfig {
  double rate = 20.0;                 // Hz
  double pixel_noise = 0.0;           // px
  double dropout_probability = 0.0;
  double dropout_disparity = 40.0;    // px
  double min_depth = 0.2;             // m
  double max_depth = 50.0;            // m
  /// [start, end) intervals in which no features are delivered.
  std::vector<std::pair<double, double>> blackouts;
};

struct LandmarkFieldConfig {
  int count = 800;
  Vec3 box_size{10.0, 10.0, 4.0};
  double shell_thickness = 1.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  TrajectoryConfig trajectory;
  ImuNoiseConfig imu;
  CameraNoiseConfig camera;
  LandmarkFieldConfig landmarks;
  CameraRig rig = CameraRig::euroc_like();

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Analytic kinematics at one instant. `q` is T_w_i's rotation.
struct KinematicState {
  double t = 0.0;
  Quaternion q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  /// Body-frame angular velocity.
  Vec3 omega = Vec3::Zero();
};

/// Continuous-time trajectory sampler.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(const TrajectoryConfig& cfg);

  KinematicState at(double t) const;
  const TrajectoryConfig& config() const { return cfg_; }

  /// Length of one closed figure-8 at the configured radius.
  static double figure8_lap_length(double radius);

 private:
  void build_spline();
  Quaternion attitude(const Vec3& v, const Vec3& a, Vec3* omega) const;

  TrajectoryConfig cfg_;
  double angular_rate_ = 0.0;
  // natural cubic spline per axis: knots and second derivatives
  std::vector<double> knots_;
  std::vector<Vec3> second_derivs_;
};

struct WorldLandmark {
  int id = -1;
  Vec3 position = Vec3::Zero();
};

struct MeasurementStream {
  std::vector<ImuSample> imu;
  /// True bias at each IMU sample.
  std::vector<ImuBias> true_bias;
  std::vector<FrameInput> frames;
  /// Body poses at frame times.
  Trajectory ground_truth;
  /// Body poses at IMU times.
  Trajectory ground_truth_imu;
  NavState initial_state;
  std::vector<WorldLandmark> landmarks;
};

/// Samples landmarks uniformly in a box shell centered on `center`.
std::vector<WorldLandmark> generate_landmarks(const LandmarkFieldConfig& cfg, const Vec3& center,
                                              std::mt19937_64& rng);

/// IMU samples at the configured rate. Sample k carries the rates that map
/// the true state at t_{k-1} onto the true state at t_k under the
/// propagation model, plus bias and white noise. Sample 0 uses the
/// analytic rates.
std::vector<ImuSample> synthesize_imu(const TrajectorySampler& traj, const ImuNoiseConfig& cfg,
                                      std::mt19937_64& rng, std::vector<ImuBias>* true_bias = nullptr);

/// Stereo observations of the landmarks from body pose T_w_i.
std::vector<StereoObservation> observe_frame(const Transform& T_w_i, int frame_id,
                                             const std::vector<WorldLandmark>& landmarks,
                                             const CameraRig& rig, const CameraNoiseConfig& cfg,
                                             std::mt19937_64& rng);

/// Full deterministic stream for a scenario.
MeasurementStream generate(const ScenarioConfig& cfg);

}  // namespace ffvio
