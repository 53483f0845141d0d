#pragma once

// Two-lap circle with odometry drift injected edge by edge, closed by the
// loop detector, the geometry check and the pose graph. Shared by the unit
// tests and the acceptance binary.

#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ffvio/loop_closure.hpp"
#include "ffvio/scenario_config.hpp"
#include "ffvio/simulator.hpp"

namespace ffvio::drift {

struct DriftExperiment {
  std::vector<Transform> truth;
  std::vector<Transform> drifted;
  std::vector<Transform> corrected;
  std::vector<PlaceSignature> signatures;
  int loops_accepted = 0;
  int loops_rejected = 0;
  bool optimized = false;
  double endpoint_before = 0.0;
  double endpoint_after = 0.0;
};

inline DriftExperiment run_drift_experiment(const std::string& config_path, double yaw_per_edge = 5e-4,
                                            double translation_per_edge = 2e-3) {
  const ScenarioConfig sc = load_run_config(config_path).scenario;
  const MeasurementStream stream = generate(sc);
  std::map<int, Vec3> world;
  for (const auto& lm : stream.landmarks) world[lm.id] = lm.position;

  DriftExperiment ex;
  std::vector<std::size_t> frames;
  std::optional<Transform> last;
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const Transform& T = stream.ground_truth[i].pose;
    if (!keyframe_decision(T, last)) continue;
    last = T;
    frames.push_back(i);
    ex.truth.push_back(T);
  }

  const Transform drift{Quaternion::from_axis_angle(Vec3::UnitZ(), yaw_per_edge),
                        Vec3(translation_per_edge, 0.0, 0.0)};
  ex.drifted.push_back(ex.truth.front());
  for (std::size_t k = 1; k < ex.truth.size(); ++k) {
    ex.drifted.push_back(ex.drifted.back() * (ex.truth[k - 1].inverse() * ex.truth[k]) * drift);
  }

  PoseGraph graph;
  graph.vertices = ex.drifted;
  for (std::size_t k = 1; k < ex.drifted.size(); ++k) {
    graph.add_adjacent(k - 1, k, ex.drifted[k - 1].inverse() * ex.drifted[k]);
  }

  std::vector<std::map<int, Vec2>> pixels;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    std::vector<int> ids;
    std::map<int, Vec2> px;
    for (const auto& obs : stream.frames[frames[k]].observations) {
      ids.push_back(obs.landmark_id);
      px[obs.landmark_id] = obs.pixel_c0;
    }
    ex.signatures.push_back(PlaceSignature::from_ids(static_cast<int>(k), ids));
    pixels.push_back(std::move(px));
  }

  std::mt19937_64 rng(sc.seed);
  const CameraRig& rig = sc.rig;
  for (std::size_t q = 0; q < frames.size(); ++q) {
    const auto c = detect_loop(ex.signatures[q], std::span(ex.signatures).first(q));
    if (!c) continue;
    // the candidate's map lives in the candidate's drifted frame
    const Transform D_c = ex.drifted[*c] * ex.truth[*c].inverse();
    std::vector<Correspondence> shared;
    for (const auto& [id, px] : pixels[q]) {
      if (pixels[*c].contains(id)) shared.push_back({D_c * world.at(id), px});
    }
    const GeometryCheck gc = geometry_check(rig.cam0, ex.drifted[*c] * rig.T_i_c0, shared,
                                            ex.drifted[q] * rig.T_i_c0, rng);
    if (!gc.pass) {
      ++ex.loops_rejected;
      continue;
    }
    ++ex.loops_accepted;
    graph.add_loop(*c, q, ex.drifted[*c].inverse() * (gc.query_pose * rig.T_i_c0.inverse()));
  }

  const PoseGraphResult res = pose_graph_optimize(graph);
  ex.optimized = res.success;
  ex.corrected = res.poses;
  ex.endpoint_before = (ex.drifted.back().translation - ex.truth.back().translation).norm();
  ex.endpoint_after = (ex.corrected.back().translation - ex.truth.back().translation).norm();
  return ex;
}

}  // namespace ffvio::drift
