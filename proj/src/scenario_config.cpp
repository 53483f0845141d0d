#include "ffvio/scenario_config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace ffvio {

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in '" + section + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key]) out = node[key].as<T>();
}

void read_vec3(const YAML::Node& node, const char* key, Vec3& out) {
  if (!node || !node[key]) return;
  const YAML::Node v = node[key];
  if (!v.IsSequence() || v.size() != 3) {
    throw ConfigError(std::string("'") + key + "' must be a list of three numbers");
  }
  out = Vec3(v[0].as<double>(), v[1].as<double>(), v[2].as<double>());
}

void parse_trajectory(const YAML::Node& n, TrajectoryConfig& t) {
  check_keys(n, "trajectory", {"kind", "radius", "speed", "duration", "center", "direction",
                               "waypoints", "fixed_yaw", "roll", "pitch"});
  if (!n) return;
  if (n["kind"]) t.kind = trajectory_kind_from_string(n["kind"].as<std::string>());
  read(n, "radius", t.radius);
  read(n, "speed", t.speed);
  read(n, "duration", t.duration);
  read_vec3(n, "center", t.center);
  read_vec3(n, "direction", t.direction);
  read(n, "roll", t.roll);
  read(n, "pitch", t.pitch);
  if (n["fixed_yaw"]) t.fixed_yaw = n["fixed_yaw"].as<double>();
  if (n["waypoints"]) {
    t.waypoints.clear();
    for (const auto& w : n["waypoints"]) {
      if (!w.IsSequence() || w.size() != 3) throw ConfigError("waypoints must be [x, y, z] triples");
      t.waypoints.emplace_back(w[0].as<double>(), w[1].as<double>(), w[2].as<double>());
    }
  }
}

void parse_imu(const YAML::Node& n, ImuNoiseConfig& c) {
  check_keys(n, "imu", {"rate", "gyro_noise_density", "accel_noise_density", "gyro_random_walk",
                        "accel_random_walk", "gyro_bias", "accel_bias"});
  read(n, "rate", c.rate);
  read(n, "gyro_noise_density", c.gyro_noise_density);
  read(n, "accel_noise_density", c.accel_noise_density);
  read(n, "gyro_random_walk", c.gyro_random_walk);
  read(n, "accel_random_walk", c.accel_random_walk);
  read_vec3(n, "gyro_bias", c.gyro_bias);
  read_vec3(n, "accel_bias", c.accel_bias);
}

void parse_camera(const YAML::Node& n, CameraNoiseConfig& c) {
  check_keys(n, "camera", {"rate", "pixel_noise", "dropout_probability", "dropout_disparity",
                           "min_depth", "max_depth", "blackouts"});
  read(n, "rate", c.rate);
  read(n, "pixel_noise", c.pixel_noise);
  read(n, "dropout_probability", c.dropout_probability);
  read(n, "dropout_disparity", c.dropout_disparity);
  read(n, "min_depth", c.min_depth);
  read(n, "max_depth", c.max_depth);
  if (n && n["blackouts"]) {
    c.blackouts.clear();
    for (const auto& b : n["blackouts"]) {
      if (!b.IsSequence() || b.size() != 2) throw ConfigError("blackouts must be [start, end] pairs");
      c.blackouts.emplace_back(b[0].as<double>(), b[1].as<double>());
    }
  }
}

void parse_landmarks(const YAML::Node& n, LandmarkFieldConfig& c) {
  check_keys(n, "landmarks", {"count", "box_size", "shell_thickness"});
  read(n, "count", c.count);
  read_vec3(n, "box_size", c.box_size);
  read(n, "shell_thickness", c.shell_thickness);
}

void parse_estimator(const YAML::Node& n, EstimatorConfig& e) {
  check_keys(n, "estimator",
             {"madgwick", "feedforward", "bias_feedback", "iir", "sliding_window", "loop_closure",
              "async", "queue_capacity", "max_keyframe_lag",
              "fuse_weight", "accel_gate", "iir_coeff", "bias_smoothing",
              "keyframe_translation", "keyframe_rotation", "ransac_iterations",
              "inlier_threshold_px", "stereo_search_radius_px", "max_lost_time",
              "window_outlier_threshold_px", "loop_temporal_guard"});
  FrontendOptions& f = e.frontend;
  read(n, "madgwick", f.madgwick);
  read(n, "feedforward", f.feedforward);
  read(n, "bias_feedback", f.bias_feedback);
  read(n, "iir", f.iir);
  read(n, "sliding_window", e.sliding_window);
  read(n, "loop_closure", e.loop_closure);
  read(n, "async", e.async);
  read(n, "queue_capacity", e.queue_capacity);
  read(n, "max_keyframe_lag", e.max_keyframe_lag);
  read(n, "fuse_weight", f.madgwick_config.fuse_weight);
  read(n, "accel_gate", f.madgwick_config.accel_gate);
  read(n, "iir_coeff", f.iir_coeff);
  read(n, "bias_smoothing", f.bias_smoothing);
  read(n, "keyframe_translation", f.keyframe.translation);
  read(n, "keyframe_rotation", f.keyframe.rotation);
  read(n, "ransac_iterations", f.ransac.iterations);
  read(n, "inlier_threshold_px", f.ransac.inlier_threshold_px);
  read(n, "stereo_search_radius_px", f.stereo_search_radius_px);
  read(n, "max_lost_time", f.max_lost_time);
  read(n, "window_outlier_threshold_px", e.window.outlier_threshold_px);
  read(n, "loop_temporal_guard", e.loop.detector.temporal_guard);
  if (f.iir_coeff < 0.0 || f.iir_coeff >= 1.0) throw ConfigError("iir_coeff must lie in [0, 1)");
  if (f.bias_smoothing < 0.0 || f.bias_smoothing > 1.0) throw ConfigError("bias_smoothing must lie in [0, 1]");
  if (f.madgwick_config.fuse_weight < 0.0) throw ConfigError("fuse_weight must be non-negative");
  if (!(f.madgwick_config.accel_gate > 0.0)) throw ConfigError("accel_gate must be positive");
  if (e.queue_capacity == 0) throw ConfigError("queue_capacity must be positive");
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml_text) {
  RunConfig cfg;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    if (!root.IsMap()) throw ConfigError("configuration root must be a mapping");
    check_keys(root, "root", {"name", "seed", "trajectory", "imu", "camera", "landmarks", "estimator"});
    read(root, "name", cfg.scenario.name);
    read(root, "seed", cfg.scenario.seed);
    parse_trajectory(root["trajectory"], cfg.scenario.trajectory);
    parse_imu(root["imu"], cfg.scenario.imu);
    parse_camera(root["camera"], cfg.scenario.camera);
    parse_landmarks(root["landmarks"], cfg.scenario.landmarks);
    parse_estimator(root["estimator"], cfg.estimator);
    cfg.scenario.validate();
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  apply_seed(cfg, cfg.scenario.seed);
  return cfg;
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.scenario.seed = seed;
  cfg.estimator.frontend.seed = seed;
  cfg.estimator.loop.seed = seed + 1;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace ffvio
