#include "ffvio/landmark_map.hpp"

#include <algorithm>
#include <stdexcept>

namespace ffvio {

namespace {

DepthMeasurement dummy_point(const StereoObservation& obs, const CameraRig& rig,
                             std::mt19937_64& rng, const DummyDepthRange& range) {
  std::uniform_real_distribution<double> depth(range.min, range.max);
  return {rig.cam0.unproject(obs.pixel_c0) * depth(rng), false};
}

}  // namespace

DepthMeasurement triangulate(const StereoObservation& obs, const CameraRig& rig,
                             std::mt19937_64& rng, const DummyDepthRange& range) {
  if (!obs.pixel_c1) return dummy_point(obs, rig, rng, range);

  // Closest points between the camera-0 ray and the camera-1 ray, in c0.
  const Vec3 o0 = Vec3::Zero();
  const Vec3 d0 = rig.cam0.unproject(obs.pixel_c0);
  const Vec3 o1 = rig.T_c0_c1.translation;
  const Vec3 d1 = rig.T_c0_c1.rotation.rotate(rig.cam1.unproject(*obs.pixel_c1));

  const Vec3 w = o0 - o1;
  const double a = d0.dot(d0);
  const double b = d0.dot(d1);
  const double c = d1.dot(d1);
  const double d = d0.dot(w);
  const double e = d1.dot(w);
  const double denom = a * c - b * b;
  if (!(std::abs(denom) > 1e-12 * a * c)) return dummy_point(obs, rig, rng, range);
  const double s = (b * e - c * d) / denom;
  const double t = (a * e - b * d) / denom;
  if (!(s > 0.0) || !(t > 0.0)) return dummy_point(obs, rig, rng, range);

  const Vec3 point = 0.5 * ((o0 + s * d0) + (o1 + t * d1));
  if (!(point.z() > 0.0)) return dummy_point(obs, rig, rng, range);

  const Vec3 p_c1 = rig.T_c0_c1.inverse() * point;
  if (!(p_c1.z() > 0.0)) return dummy_point(obs, rig, rng, range);
  const double r0 = (rig.cam0.project(point) - obs.pixel_c0).norm();
  const double r1 = (rig.cam1.project(p_c1) - *obs.pixel_c1).norm();
  if (r0 >= kTriangulationGatePx || r1 >= kTriangulationGatePx) {
    return dummy_point(obs, rig, rng, range);
  }
  return {point, true};
}

std::optional<Vec2> reproject_guess(const Vec3& landmark_w, const Transform& T_w_c0,
                                    const CameraRig& rig) {
  return project_point(rig.cam1, T_w_c0 * rig.T_c0_c1, landmark_w);
}

Vec3 iir_update(const Vec3& previous, const Vec3& measured, double coeff) {
  return coeff * previous + (1.0 - coeff) * measured;
}

const Landmark* LandmarkMap::find(int id) const {
  const auto it = landmarks_.find(id);
  return it == landmarks_.end() ? nullptr : &it->second;
}

void LandmarkMap::integrate(int frame_id, const Transform& T_w_c0, int id,
                            const DepthMeasurement& m) {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) {
    landmarks_.emplace(id, Landmark{id, T_w_c0 * m.point_c0, m.valid, 1, frame_id});
    return;
  }
  Landmark& lm = it->second;
  lm.observation_count += 1;
  lm.last_seen_frame = frame_id;
  if (!m.valid) return;
  if (!lm.has_valid_depth) {
    // promotion: the dummy position is discarded, never blended
    lm.position_w = T_w_c0 * m.point_c0;
    lm.has_valid_depth = true;
    return;
  }
  if (!options_.use_iir) {
    lm.position_w = T_w_c0 * m.point_c0;
    return;
  }
  const Vec3 prev_c0 = T_w_c0.inverse() * lm.position_w;
  lm.position_w = T_w_c0 * iir_update(prev_c0, m.point_c0, options_.iir_coeff);
}

std::size_t LandmarkMap::sweep(int frame_id, const Transform& T_w_c0, const CameraRig& rig) {
  const Transform T_c0_w = T_w_c0.inverse();
  return std::erase_if(landmarks_, [&](const auto& entry) {
    const Landmark& lm = entry.second;
    if (lm.last_seen_frame != frame_id) return true;
    const Vec3 p = T_c0_w * lm.position_w;
    if (!(p.z() > 0.0)) return true;
    return !rig.cam0.in_bounds(rig.cam0.project(p));
  });
}

void LandmarkMap::apply_correction(const Transform& correction,
                                   const std::vector<std::pair<int, Vec3>>& updates) {
  std::map<int, Vec3> listed(updates.begin(), updates.end());
  for (auto& [id, lm] : landmarks_) {
    const auto u = listed.find(id);
    if (u != listed.end() && lm.has_valid_depth) {
      lm.position_w = u->second;
    } else {
      lm.position_w = correction * lm.position_w;
    }
  }
}

}  // namespace ffvio
