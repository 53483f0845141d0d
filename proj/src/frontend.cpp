#include "ffvio/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ffvio {

EulerZYX to_euler_zyx(const Quaternion& q) {
  const Mat3 R = rotation_matrix(q);
  EulerZYX e;
  e.yaw = std::atan2(R(1, 0), R(0, 0));
  e.pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  e.roll = std::atan2(R(2, 1), R(2, 2));
  return e;
}

Quaternion from_euler_zyx(const EulerZYX& e) {
  const Quaternion qz = Quaternion::from_axis_angle(Vec3::UnitZ(), e.yaw);
  const Quaternion qy = Quaternion::from_axis_angle(Vec3::UnitY(), e.pitch);
  const Quaternion qx = Quaternion::from_axis_angle(Vec3::UnitX(), e.roll);
  return (qz * qy * qx).normalized();
}

Quaternion rollpitch_feedforward(const Quaternion& visual_guess, const Quaternion& imu_attitude) {
  const EulerZYX v = to_euler_zyx(visual_guess);
  const EulerZYX i = to_euler_zyx(imu_attitude);
  constexpr double kGimbal = 1e-3;
  const double half_pi = 0.5 * std::numbers::pi;
  if (std::abs(std::abs(v.pitch) - half_pi) < kGimbal ||
      std::abs(std::abs(i.pitch) - half_pi) < kGimbal) {
    return visual_guess;
  }
  return from_euler_zyx({i.roll, i.pitch, v.yaw});
}

bool keyframe_decision(const Transform& current, const std::optional<Transform>& last_keyframe,
                       const KeyframeThresholds& thresholds) {
  if (!last_keyframe) return true;
  const Transform delta = last_keyframe->inverse() * current;
  return delta.translation.norm() > thresholds.translation ||
         rotation_angle(delta) > thresholds.rotation;
}

Frontend::Frontend(const CameraRig& rig, const NavState& initial, const FrontendOptions& options)
    : rig_(rig),
      options_(options),
      state_(initial),
      propagator_(initial, ImuPropagator::Options{options.madgwick, options.madgwick_config}),
      raw_propagator_(initial, ImuPropagator::Options{false, options.madgwick_config}),
      map_(LandmarkMap::Options{options.iir_coeff, options.iir}),
      rng_(options.seed) {
  rig_.validate();
}

void Frontend::recover_depth(const FrameInput& frame, const Transform& T_w_c0) {
  for (const auto& obs : frame.observations) {
    StereoObservation o = obs;
    if (o.pixel_c1) {
      // stereo tracking is seeded by the reprojection of a known landmark,
      // otherwise by the camera-0 pixel
      std::optional<Vec2> seed = o.pixel_c0;
      if (const Landmark* lm = map_.find(o.landmark_id); lm && lm->has_valid_depth) {
        seed = reproject_guess(lm->position_w, T_w_c0, rig_);
      }
      if (!seed || (*seed - *o.pixel_c1).norm() > options_.stereo_search_radius_px) {
        o.pixel_c1.reset();
      }
    }
    const DepthMeasurement m = triangulate(o, rig_, rng_, options_.dummy_depth);
    map_.integrate(frame.frame_id, T_w_c0, o.landmark_id, m);
  }
}

std::optional<KeyframeMessage> Frontend::maybe_keyframe(const FrameInput& frame) {
  const Transform pose = state_.pose();
  if (!keyframe_decision(pose, last_keyframe_pose_, options_.keyframe)) return std::nullopt;
  KeyframeMessage kf;
  kf.keyframe_id = next_keyframe_id_++;
  kf.frame_id = frame.frame_id;
  kf.timestamp = frame.timestamp;
  kf.pose = pose;
  kf.corrections_seen = corrections_applied_;
  for (const auto& obs : frame.observations) {
    const Landmark* lm = map_.find(obs.landmark_id);
    if (lm && lm->has_valid_depth) kf.landmarks.push_back({obs.landmark_id, lm->position_w, obs.pixel_c0, obs.pixel_c1});
  }
  last_keyframe_pose_ = pose;
  return kf;
}

FrameResult Frontend::process_frame(const FrameInput& frame, std::span<const ImuSample> imu) {
  FrameResult out;
  out.frame_id = frame.frame_id;
  out.timestamp = frame.timestamp;

  if (!initialized_) {
    initialized_ = true;
    state_.timestamp = frame.timestamp;
    recover_depth(frame, state_.pose() * rig_.T_i_c0);
    out.state = state_;
    out.bias = bias_;
    out.map_size = map_.size();
    out.keyframe = maybe_keyframe(frame);
    return out;
  }
  if (!(frame.timestamp > state_.timestamp)) {
    throw std::invalid_argument("Frontend: frames must arrive in time order");
  }

  // IMU propagation from the last visual state
  const NavState state_a = state_;
  propagator_.reset(state_a);
  propagator_.set_bias(bias_);
  raw_propagator_.reset(state_a);
  raw_propagator_.set_bias(bias_);
  std::vector<NavState> chain;
  std::vector<NavState> raw_chain;
  for (const auto& s : imu) {
    if (s.timestamp <= state_a.timestamp + 1e-12) continue;
    if (s.timestamp > frame.timestamp + 1e-12) break;
    chain.push_back(propagator_.integrate(s));
    if (options_.madgwick) raw_chain.push_back(raw_propagator_.integrate(s));
  }
  if (chain.empty() || std::abs(chain.back().timestamp - frame.timestamp) > 1e-9) {
    throw std::invalid_argument("Frontend: IMU segment does not reach the frame time");
  }
  const NavState predicted = chain.back();

  // PnP with the IMU pose as seed
  std::vector<Correspondence> corr;
  for (const auto& obs : frame.observations) {
    const Landmark* lm = map_.find(obs.landmark_id);
    if (lm && lm->has_valid_depth) corr.push_back({lm->position_w, obs.pixel_c0});
  }
  out.correspondences = static_cast<int>(corr.size());

  const Transform T_c0_i = rig_.T_i_c0.inverse();
  bool lost = false;
  NavState state_b = predicted;
  if (corr.size() >= 4) {
    try {
      const PnpResult pnp = ransac_pnp(rig_.cam0, corr, predicted.pose() * rig_.T_i_c0, rng_,
                                       options_.ransac);
      Transform body = pnp.pose * T_c0_i;
      if (options_.feedforward) body.rotation = rollpitch_feedforward(body.rotation, predicted.q);

      std::vector<Correspondence> inl;
      for (std::size_t i = 0; i < corr.size(); ++i) {
        if (pnp.inliers[i]) inl.push_back(corr[i]);
      }
      if (inl.size() < 4) throw TrackingLost("too few inliers");
      const PoseRefineResult ba = inframe_ba(rig_.cam0, body * rig_.T_i_c0, inl);
      body = ba.pose * T_c0_i;

      out.inliers = static_cast<int>(inl.size());
      out.low_confidence = pnp.low_confidence;
      double sq = 0.0;
      for (const auto& c : inl) {
        sq += reprojection_term(rig_.cam0, ba.pose, c.point_w, c.pixel).error.squaredNorm();
      }
      out.reprojection_rms = std::sqrt(sq / static_cast<double>(inl.size()));

      state_b.q = body.rotation;
      state_b.p = body.translation;
    } catch (const TrackingLost&) {
      lost = true;
    }
  } else {
    lost = true;
  }

  if (lost) {
    if (!previous_lost_) lost_since_ = state_a.timestamp;
    if (frame.timestamp - lost_since_ > options_.max_lost_time) {
      throw HardFailure("tracking lost for more than " + std::to_string(options_.max_lost_time) + " s");
    }
  } else {
    // middle-state velocity carried to t_B with the IMU velocity change
    const double dt = frame.timestamp - state_a.timestamp;
    const Vec3 v_mid = (state_b.p - state_a.p) / dt;
    const double t_mid = state_a.timestamp + 0.5 * dt;
    const std::vector<NavState>& ref = options_.madgwick ? raw_chain : chain;
    const NavState* nearest = &ref.front();
    for (const auto& s : ref) {
      if (std::abs(s.timestamp - t_mid) < std::abs(nearest->timestamp - t_mid)) nearest = &s;
    }
    state_b.v = v_mid + (ref.back().v - nearest->v);

    if (options_.bias_feedback && !previous_lost_) {
      InterframeRecord rec{state_a, state_b, ref};
      const BiasUpdate upd = update_bias(rec, bias_, options_.bias_smoothing,
                                         options_.bias_limits, options_.bias_guards);
      bias_ = upd.bias;
    }
  }
  state_b.timestamp = frame.timestamp;
  state_ = state_b;
  previous_lost_ = lost;

  const Transform T_w_c0 = state_.pose() * rig_.T_i_c0;
  recover_depth(frame, T_w_c0);
  if (!frame.observations.empty()) map_.sweep(frame.frame_id, T_w_c0, rig_);

  out.state = state_;
  out.bias = bias_;
  out.tracking_lost = lost;
  out.map_size = map_.size();
  chain.pop_back();
  out.imu_states = std::move(chain);
  if (!lost) out.keyframe = maybe_keyframe(frame);
  return out;
}

void Frontend::apply_correction(const CorrectionMessage& msg) {
  if (!msg.correction.is_finite()) throw std::invalid_argument("Frontend: non-finite correction");
  const Transform& C = msg.correction;
  const Transform pose = C * state_.pose();
  state_.q = pose.rotation;
  state_.p = pose.translation;
  state_.v = C.rotation.rotate(state_.v);
  if (last_keyframe_pose_) last_keyframe_pose_ = C * *last_keyframe_pose_;
  map_.apply_correction(C, msg.landmark_updates);
  ++corrections_applied_;
}

}  // namespace ffvio
