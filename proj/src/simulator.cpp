#include "ffvio/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ffvio {

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Figure8: return "figure8";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Line: return "line";
    case TrajectoryKind::Static: return "static";
    case TrajectoryKind::Spline: return "spline";
  }
  return "unknown";
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "figure8") return TrajectoryKind::Figure8;
  if (name == "circle") return TrajectoryKind::Circle;
  if (name == "line") return TrajectoryKind::Line;
  if (name == "static") return TrajectoryKind::Static;
  if (name == "spline" || name == "waypoints") return TrajectoryKind::Spline;
  throw std::invalid_argument("unknown trajectory kind '" + name + "'");
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ScenarioConfig: " + what); };
  const auto& tr = trajectory;
  if (!(tr.duration > 0.0)) fail("duration must be positive");
  if (!(imu.rate > 0.0) || !(camera.rate > 0.0)) fail("rates must be positive");
  if (imu.rate < camera.rate) fail("imu rate must be at least the camera rate");
  const double ratio = imu.rate / camera.rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) fail("imu rate must be a multiple of the camera rate");
  if (camera.dropout_probability < 0.0 || camera.dropout_probability > 1.0) fail("dropout probability outside [0, 1]");
  if (camera.pixel_noise < 0.0 || imu.gyro_noise_density < 0.0 || imu.accel_noise_density < 0.0 ||
      imu.gyro_random_walk < 0.0 || imu.accel_random_walk < 0.0) {
    fail("noise levels must be non-negative");
  }
  if (!(camera.min_depth > 0.0) || !(camera.max_depth > camera.min_depth)) fail("bad depth range");
  if ((tr.kind == TrajectoryKind::Figure8 || tr.kind == TrajectoryKind::Circle) &&
      (!(tr.speed > 0.0) || !(tr.radius > 0.0))) {
    fail("figure8 and circle need positive speed and radius");
  }
  if (tr.kind == TrajectoryKind::Spline && tr.waypoints.size() < 2) fail("spline needs two or more waypoints");
  if (tr.kind == TrajectoryKind::Spline && !(tr.speed > 0.0)) fail("spline needs a positive speed");
  if (landmarks.count < 0) fail("landmark count must be non-negative");
  if (!(landmarks.shell_thickness > 0.0)) fail("shell thickness must be positive");
  for (const auto& [a, b] : camera.blackouts) {
    if (!(b > a)) fail("blackout interval must have end > start");
  }
  rig.validate();
}

double TrajectorySampler::figure8_lap_length(double radius) {
  // composite Simpson over one period of |d/dtheta (2R sin t, R sin 2t)|
  const int n = 20000;
  const double h = 2.0 * std::numbers::pi / n;
  auto f = [&](double t) { return radius * std::hypot(2.0 * std::cos(t), 2.0 * std::cos(2.0 * t)); };
  double s = f(0.0) + f(2.0 * std::numbers::pi);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

TrajectorySampler::TrajectorySampler(const TrajectoryConfig& cfg) : cfg_(cfg) {
  if ((cfg_.kind == TrajectoryKind::Figure8 || cfg_.kind == TrajectoryKind::Circle) &&
      (!(cfg_.speed > 0.0) || !(cfg_.radius > 0.0))) {
    throw std::invalid_argument("TrajectorySampler: figure8 and circle need positive speed and radius");
  }
  switch (cfg_.kind) {
    case TrajectoryKind::Figure8:
      angular_rate_ = 2.0 * std::numbers::pi * cfg_.speed / figure8_lap_length(cfg_.radius);
      break;
    case TrajectoryKind::Circle:
      angular_rate_ = cfg_.speed / cfg_.radius;
      break;
    case TrajectoryKind::Spline:
      build_spline();
      break;
    default:
      break;
  }
}

void TrajectorySampler::build_spline() {
  const auto& w = cfg_.waypoints;
  const std::size_t n = w.size();
  if (n < 2) throw std::invalid_argument("TrajectorySampler: spline needs two or more waypoints");
  knots_.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) knots_[i] = knots_[i - 1] + (w[i] - w[i - 1]).norm() / cfg_.speed;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(knots_[i] > knots_[i - 1])) throw std::invalid_argument("TrajectorySampler: repeated waypoint");
  }
  // natural boundary: M_0 = M_{n-1} = 0; tridiagonal solve (Thomas)
  second_derivs_.assign(n, Vec3::Zero());
  if (n < 3) return;
  const std::size_t m = n - 2;
  std::vector<double> diag(m), upper(m), lower(m);
  std::vector<Vec3> rhs(m);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = knots_[i] - knots_[i - 1];
    const double h1 = knots_[i + 1] - knots_[i];
    lower[i - 1] = h0;
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((w[i + 1] - w[i]) / h1 - (w[i] - w[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < m; ++i) {
    const double f = lower[i] / diag[i - 1];
    diag[i] -= f * upper[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  std::vector<Vec3> sol(m);
  sol[m - 1] = rhs[m - 1] / diag[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
  for (std::size_t i = 0; i < m; ++i) second_derivs_[i + 1] = sol[i];
}

Quaternion TrajectorySampler::attitude(const Vec3& v, const Vec3& a, Vec3* omega) const {
  double yaw = 0.0;
  double yaw_rate = 0.0;
  const double vh2 = v.x() * v.x() + v.y() * v.y();
  if (cfg_.fixed_yaw) {
    yaw = *cfg_.fixed_yaw;
  } else if (cfg_.kind == TrajectoryKind::Line) {
    yaw = std::atan2(cfg_.direction.y(), cfg_.direction.x());
  } else if (vh2 > 1e-12) {
    yaw = std::atan2(v.y(), v.x());
    yaw_rate = (v.x() * a.y() - v.y() * a.x()) / vh2;
  }
  const Quaternion q = from_euler_zyx({cfg_.roll, cfg_.pitch, yaw});
  *omega = q.inverse().rotate(Vec3(0.0, 0.0, yaw_rate));
  return q;
}

KinematicState TrajectorySampler::at(double t) const {
  KinematicState s;
  s.t = t;
  const Vec3& c = cfg_.center;
  switch (cfg_.kind) {
    case TrajectoryKind::Figure8: {
      const double R = cfg_.radius;
      const double w = angular_rate_;
      const double th = w * t;
      s.p = c + Vec3(2.0 * R * std::sin(th), R * std::sin(2.0 * th), 0.0);
      s.v = Vec3(2.0 * R * w * std::cos(th), 2.0 * R * w * std::cos(2.0 * th), 0.0);
      s.a = Vec3(-2.0 * R * w * w * std::sin(th), -4.0 * R * w * w * std::sin(2.0 * th), 0.0);
      break;
    }
    case TrajectoryKind::Circle: {
      const double R = cfg_.radius;
      const double w = angular_rate_;
      const double th = w * t;
      s.p = c + Vec3(R * std::cos(th), R * std::sin(th), 0.0);
      s.v = Vec3(-R * w * std::sin(th), R * w * std::cos(th), 0.0);
      s.a = Vec3(-R * w * w * std::cos(th), -R * w * w * std::sin(th), 0.0);
      break;
    }
    case TrajectoryKind::Line: {
      Vec3 d = cfg_.direction;
      d.z() = 0.0;
      d = d.norm() > 0.0 ? Vec3(d.normalized()) : Vec3(Vec3::UnitX());
      s.p = c + d * cfg_.speed * (t - 0.5 * cfg_.duration);
      s.v = d * cfg_.speed;
      break;
    }
    case TrajectoryKind::Static:
      s.p = c;
      break;
    case TrajectoryKind::Spline: {
      const auto& w = cfg_.waypoints;
      const double tc = std::clamp(t, knots_.front(), knots_.back());
      std::size_t i = std::upper_bound(knots_.begin(), knots_.end(), tc) - knots_.begin();
      i = std::clamp<std::size_t>(i, 1, knots_.size() - 1) - 1;
      const double h = knots_[i + 1] - knots_[i];
      const double A = (knots_[i + 1] - tc) / h;
      const double B = (tc - knots_[i]) / h;
      const Vec3& M0 = second_derivs_[i];
      const Vec3& M1 = second_derivs_[i + 1];
      s.p = A * w[i] + B * w[i + 1] + ((A * A * A - A) * M0 + (B * B * B - B) * M1) * (h * h / 6.0);
      s.v = (w[i + 1] - w[i]) / h + (-(3.0 * A * A - 1.0) * M0 + (3.0 * B * B - 1.0) * M1) * (h / 6.0);
      s.a = A * M0 + B * M1;
      break;
    }
  }
  s.q = attitude(s.v, s.a, &s.omega);
  return s;
}

std::vector<WorldLandmark> generate_landmarks(const LandmarkFieldConfig& cfg, const Vec3& center,
                                              std::mt19937_64& rng) {
  const Vec3 half = 0.5 * cfg.box_size;
  const Vec3 inner = (half.array() - cfg.shell_thickness).max(0.0).matrix();
  std::uniform_real_distribution<double> ux(-half.x(), half.x());
  std::uniform_real_distribution<double> uy(-half.y(), half.y());
  std::uniform_real_distribution<double> uz(-half.z(), half.z());
  std::vector<WorldLandmark> out;
  out.reserve(cfg.count);
  while (static_cast<int>(out.size()) < cfg.count) {
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    const bool in_core = std::abs(p.x()) < inner.x() && std::abs(p.y()) < inner.y() &&
                         std::abs(p.z()) < inner.z();
    if (in_core) continue;
    out.push_back({static_cast<int>(out.size()), center + p});
  }
  return out;
}

std::vector<ImuSample> synthesize_imu(const TrajectorySampler& traj, const ImuNoiseConfig& cfg,
                                      std::mt19937_64& rng, std::vector<ImuBias>* true_bias) {
  const double dt = 1.0 / cfg.rate;
  const auto n = static_cast<std::size_t>(std::floor(traj.config().duration * cfg.rate + 1e-9));
  const double sg = cfg.gyro_noise_density * std::sqrt(cfg.rate);
  const double sa = cfg.accel_noise_density * std::sqrt(cfg.rate);
  const double rwg = cfg.gyro_random_walk * std::sqrt(dt);
  const double rwa = cfg.accel_random_walk * std::sqrt(dt);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise3 = [&](double sigma) { return Vec3(sigma * gauss(rng), sigma * gauss(rng), sigma * gauss(rng)); };

  std::vector<ImuSample> out;
  out.reserve(n + 1);
  if (true_bias) true_bias->clear();
  ImuBias bias{cfg.accel_bias, cfg.gyro_bias};
  KinematicState prev = traj.at(0.0);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / cfg.rate;
    const KinematicState cur = k == 0 ? prev : traj.at(t);
    if (k > 0) {
      bias.gyro += noise3(rwg);
      bias.accel += noise3(rwa);
    }
    ImuSample s;
    s.timestamp = t;
    if (k == 0) {
      s.gyro = cur.omega;
      s.accel = cur.q.inverse().rotate(cur.a + kGravity);
    } else {
      Quaternion dq = prev.q.inverse() * cur.q;
      if (dq.w < 0.0) dq = {-dq.w, -dq.x, -dq.y, -dq.z};
      s.gyro = 2.0 * dq.vec() / (dq.w * dt);
      s.accel = rotation_matrix(prev.q).transpose() * ((cur.v - prev.v) / dt + kGravity);
    }
    s.gyro += bias.gyro + noise3(sg);
    s.accel += bias.accel + noise3(sa);
    out.push_back(s);
    if (true_bias) true_bias->push_back(bias);
    prev = cur;
  }
  return out;
}

std::vector<StereoObservation> observe_frame(const Transform& T_w_i, int frame_id,
                                             const std::vector<WorldLandmark>& landmarks,
                                             const CameraRig& rig, const CameraNoiseConfig& cfg,
                                             std::mt19937_64& rng) {
  const Transform T_c0_w = (T_w_i * rig.T_i_c0).inverse();
  const Transform T_c1_w = rig.T_c0_c1.inverse() * T_c0_w;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<StereoObservation> out;
  for (const auto& lm : landmarks) {
    const Vec3 p0 = T_c0_w * lm.position;
    const Vec3 p1 = T_c1_w * lm.position;
    if (!(p0.z() > cfg.min_depth && p0.z() < cfg.max_depth)) continue;
    if (!(p1.z() > cfg.min_depth && p1.z() < cfg.max_depth)) continue;
    const Vec2 u0 = rig.cam0.project(p0);
    const Vec2 u1 = rig.cam1.project(p1);
    if (!rig.cam0.in_bounds(u0) || !rig.cam1.in_bounds(u1)) continue;
    const Vec2 n0 = u0 + cfg.pixel_noise * Vec2(gauss(rng), gauss(rng));
    const Vec2 n1 = u1 + cfg.pixel_noise * Vec2(gauss(rng), gauss(rng));
    const bool drop = (u0.x() - u1.x()) > cfg.dropout_disparity && uniform(rng) < cfg.dropout_probability;
    if (!rig.cam0.in_bounds(n0)) continue;
    StereoObservation obs;
    obs.landmark_id = lm.id;
    obs.frame_id = frame_id;
    obs.pixel_c0 = n0;
    if (!drop && rig.cam1.in_bounds(n1)) obs.pixel_c1 = n1;
    out.push_back(obs);
  }
  return out;
}

MeasurementStream generate(const ScenarioConfig& cfg) {
  cfg.validate();
  const TrajectorySampler traj(cfg.trajectory);
  MeasurementStream out;

  std::seed_seq seq_lm{cfg.seed, std::uint64_t{1}};
  std::seed_seq seq_imu{cfg.seed, std::uint64_t{2}};
  std::seed_seq seq_cam{cfg.seed, std::uint64_t{3}};
  std::mt19937_64 rng_lm(seq_lm);
  std::mt19937_64 rng_imu(seq_imu);
  std::mt19937_64 rng_cam(seq_cam);

  // landmark field centered on the trajectory's bounding box
  Vec3 lo = Vec3::Constant(1e300);
  Vec3 hi = Vec3::Constant(-1e300);
  const int probes = 2000;
  for (int i = 0; i <= probes; ++i) {
    const Vec3 p = traj.at(cfg.trajectory.duration * i / probes).p;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  out.landmarks = generate_landmarks(cfg.landmarks, 0.5 * (lo + hi), rng_lm);

  out.imu = synthesize_imu(traj, cfg.imu, rng_imu, &out.true_bias);
  for (const auto& s : out.imu) {
    const KinematicState k = traj.at(s.timestamp);
    out.ground_truth_imu.push_back(s.timestamp, {k.q, k.p});
  }

  const KinematicState k0 = traj.at(0.0);
  out.initial_state = NavState{k0.q, k0.p, k0.v, 0.0};

  const auto n_frames =
      static_cast<int>(std::floor(cfg.trajectory.duration * cfg.camera.rate + 1e-9));
  for (int j = 0; j <= n_frames; ++j) {
    const double t = static_cast<double>(j) / cfg.camera.rate;
    const KinematicState k = traj.at(t);
    const Transform pose{k.q, k.p};
    out.ground_truth.push_back(t, pose);
    FrameInput f;
    f.frame_id = j;
    f.timestamp = t;
    bool dark = false;
    for (const auto& [a, b] : cfg.camera.blackouts) dark = dark || (t >= a && t < b);
    if (!dark) f.observations = observe_frame(pose, j, out.landmarks, cfg.rig, cfg.camera, rng_cam);
    out.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace ffvio
