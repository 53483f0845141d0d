#include "ffvio/backend_window.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ffvio/pose_solver.hpp"

namespace ffvio {

SlidingWindow::SlidingWindow(const CameraRig& rig, std::size_t capacity)
    : rig_(rig), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("SlidingWindow: capacity must be positive");
}

void SlidingWindow::insert(const KeyframeMessage& kf) {
  if (!keyframes_.empty() && (kf.keyframe_id <= keyframes_.back().keyframe_id ||
                              kf.timestamp <= keyframes_.back().timestamp)) {
    throw std::invalid_argument("SlidingWindow: keyframe out of order");
  }
  WindowKeyframe w;
  w.keyframe_id = kf.keyframe_id;
  w.timestamp = kf.timestamp;
  w.pose = kf.pose * rig_.T_i_c0;
  for (const auto& lm : kf.landmarks) {
    w.observations[lm.landmark_id] = lm.pixel_c0;
    if (lm.pixel_c1) w.observations_c1[lm.landmark_id] = *lm.pixel_c1;
    landmarks_[lm.landmark_id] = lm.position_w;
  }
  keyframes_.push_back(std::move(w));
  while (keyframes_.size() > capacity_) keyframes_.pop_front();
  for (auto& k : keyframes_) k.fixed = false;
  keyframes_.front().fixed = true;
  drop_unobserved_landmarks();
}

bool SlidingWindow::observed(int keyframe_id, int landmark_id) const {
  for (const auto& k : keyframes_) {
    if (k.keyframe_id == keyframe_id) return k.observations.contains(landmark_id);
  }
  return false;
}

int SlidingWindow::observation_count(int landmark_id) const {
  int n = 0;
  for (const auto& k : keyframes_) n += k.observations.contains(landmark_id) ? 1 : 0;
  return n;
}

void SlidingWindow::apply_correction(const Transform& correction) {
  for (auto& k : keyframes_) k.pose = correction * k.pose;
  for (auto& [id, p] : landmarks_) p = correction * p;
}

void SlidingWindow::drop_unobserved_landmarks() {
  std::erase_if(landmarks_, [&](const auto& entry) { return observation_count(entry.first) == 0; });
}

namespace {

constexpr double kBehindPenaltyPx2 = 1e6;
constexpr double kNegligibleStep = 1e-12;  // m or rad

struct Edge {
  std::size_t kf;      // index into the window
  int landmark_id;
  Vec2 pixel;
  int camera;          // 0 or 1
};

ReprojectionTerm edge_term(const CameraRig& rig, const Transform& T_w_c0, const Vec3& p_w,
                           const Edge& e) {
  return e.camera == 0 ? reprojection_term(rig.cam0, T_w_c0, p_w, e.pixel)
                       : reprojection_term(rig.cam1, T_w_c0, rig.T_c0_c1, p_w, e.pixel);
}

// Squared pixel error, or the behind-camera penalty.
double edge_sq_error(const CameraRig& rig, const Transform& T_w_c0, const Vec3& p_w,
                     const Edge& e) {
  const Transform T_w_c = e.camera == 0 ? T_w_c0 : T_w_c0 * rig.T_c0_c1;
  const PinholeIntrinsics& cam = e.camera == 0 ? rig.cam0 : rig.cam1;
  const Vec3 p_c = T_w_c.inverse() * p_w;
  return p_c.z() > 1e-9 ? (e.pixel - cam.project(p_c)).squaredNorm() : kBehindPenaltyPx2;
}

std::vector<Edge> collect_edges(const SlidingWindow& window, const std::set<EdgeKey>& rejected) {
  std::vector<Edge> edges;
  const auto& kfs = window.keyframes();
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    for (const auto& [lid, px] : kfs[k].observations) {
      if (!window.landmarks().contains(lid)) continue;
      if (rejected.contains({kfs[k].keyframe_id, lid})) continue;
      edges.push_back({k, lid, px, 0});
      const auto c1 = kfs[k].observations_c1.find(lid);
      if (c1 != kfs[k].observations_c1.end()) edges.push_back({k, lid, c1->second, 1});
    }
  }
  return edges;
}

double edges_cost(const CameraRig& rig, const std::vector<Transform>& poses,
                  const std::map<int, Vec3>& landmarks, const std::vector<Edge>& edges,
                  double delta) {
  double cost = 0.0;
  for (const auto& e : edges) {
    cost += huber(edge_sq_error(rig, poses[e.kf], landmarks.at(e.landmark_id), e), delta);
  }
  return cost;
}

}  // namespace

double window_cost(const SlidingWindow& window, const std::set<EdgeKey>& rejected,
                   double huber_delta) {
  std::vector<Transform> poses;
  for (const auto& k : window.keyframes()) poses.push_back(k.pose);
  return edges_cost(window.rig(), poses, window.landmarks(), collect_edges(window, rejected),
                    huber_delta);
}

WindowOptimizeResult optimize_window(SlidingWindow& window, const WindowOptimizeOptions& options) {
  WindowOptimizeResult result;
  const auto& kfs = window.keyframes();
  const CameraRig& rig = window.rig();
  for (const auto& k : kfs) result.poses_before.push_back(k.pose);
  result.poses_after = result.poses_before;
  if (kfs.size() < 2) return result;

  int multiview = 0;
  for (const auto& [lid, p] : window.landmarks()) multiview += window.observation_count(lid) >= 2 ? 1 : 0;
  if (multiview < options.min_multiview_landmarks) return result;

  std::vector<Transform> poses = result.poses_before;
  std::map<int, Vec3> landmarks = window.landmarks();
  const std::size_t n_kf = kfs.size();
  // pose variable index for keyframe k, -1 when fixed
  std::vector<int> pose_var(n_kf, -1);
  int n_pose = 0;
  for (std::size_t k = 0; k < n_kf; ++k) {
    if (!kfs[k].fixed) pose_var[k] = n_pose++;
  }
  const int P = 6 * n_pose;

  std::set<EdgeKey> rejected;
  int iteration = 0;
  for (int stage = 1; stage <= 2; ++stage) {
    const std::vector<Edge> edges = collect_edges(window, rejected);
    std::map<int, int> active_count;
    for (const auto& e : edges) active_count[e.landmark_id] += e.camera == 0 ? 1 : 0;
    double cost = edges_cost(rig, poses, landmarks, edges, options.huber_delta);

    bool stalled = false;
    for (int it = 0; it < options.stage_iterations; ++it) {
      ++iteration;
      if (stalled) {
        // same linearization point as the stalled iteration: same outcome
        result.history.push_back({iteration, stage, cost, static_cast<int>(edges.size())});
        continue;
      }
      struct LandmarkBlock {
        Mat3 H = Mat3::Zero();
        Vec3 g = Vec3::Zero();
        std::vector<std::pair<int, Eigen::Matrix<double, 6, 3>>> coupling;
      };
      Eigen::MatrixXd Hpp = Eigen::MatrixXd::Zero(P, P);
      Eigen::VectorXd gp = Eigen::VectorXd::Zero(P);
      std::map<int, LandmarkBlock> blocks;

      for (const auto& e : edges) {
        const ReprojectionTerm t = edge_term(rig, poses[e.kf], landmarks.at(e.landmark_id), e);
        if (!t.in_front) continue;
        const double w = huber_weight(t.error.squaredNorm(), options.huber_delta);
        const int pv = pose_var[e.kf];
        const bool free_lm = active_count[e.landmark_id] >= 2;
        if (pv >= 0) {
          Hpp.block<6, 6>(6 * pv, 6 * pv).noalias() += w * t.d_pose.transpose() * t.d_pose;
          gp.segment<6>(6 * pv).noalias() += w * t.d_pose.transpose() * t.error;
        }
        if (free_lm) {
          LandmarkBlock& b = blocks[e.landmark_id];
          b.H.noalias() += w * t.d_point.transpose() * t.d_point;
          b.g.noalias() += w * t.d_point.transpose() * t.error;
          if (pv >= 0) {
            // the two cameras of one keyframe share a pose block
            if (b.coupling.empty() || b.coupling.back().first != pv) {
              b.coupling.emplace_back(pv, Eigen::Matrix<double, 6, 3>::Zero());
            }
            b.coupling.back().second.noalias() += w * t.d_pose.transpose() * t.d_point;
          }
        }
      }

      bool accepted = false;
      bool converged = false;
      double lambda = 0.0;
      for (int attempt = 0; attempt <= options.max_damping_attempts && !accepted; ++attempt) {
        Eigen::MatrixXd S = Hpp;
        Eigen::VectorXd rhs = -gp;
        S.diagonal().array() += lambda;
        std::map<int, Mat3> Hll_inv;
        for (const auto& [lid, b] : blocks) {
          Mat3 Hll = b.H;
          Hll.diagonal().array() += lambda;
          Eigen::LLT<Mat3> llt(Hll);
          if (llt.info() != Eigen::Success) continue;
          const Mat3 inv = llt.solve(Mat3::Identity());
          Hll_inv[lid] = inv;
          for (const auto& [k1, H1] : b.coupling) {
            const Eigen::Matrix<double, 6, 3> H1inv = H1 * inv;
            rhs.segment<6>(6 * k1).noalias() += H1inv * b.g;
            for (const auto& [k2, H2] : b.coupling) {
              S.block<6, 6>(6 * k1, 6 * k2).noalias() -= H1inv * H2.transpose();
            }
          }
        }
        Eigen::VectorXd dp = Eigen::VectorXd::Zero(P);
        if (P > 0) dp = S.ldlt().solve(rhs);

        std::vector<Transform> cand_poses = poses;
        for (std::size_t k = 0; k < n_kf; ++k) {
          if (pose_var[k] >= 0) cand_poses[k] = retract(poses[k], dp.segment<6>(6 * pose_var[k]));
        }
        std::map<int, Vec3> cand_lm = landmarks;
        bool finite = dp.allFinite();
        double step = P > 0 ? dp.lpNorm<Eigen::Infinity>() : 0.0;
        for (const auto& [lid, inv] : Hll_inv) {
          const LandmarkBlock& b = blocks.at(lid);
          Vec3 r = -b.g;
          for (const auto& [k, H] : b.coupling) r.noalias() -= H.transpose() * dp.segment<6>(6 * k);
          const Vec3 dl = inv * r;
          finite = finite && dl.allFinite();
          step = std::max(step, dl.lpNorm<Eigen::Infinity>());
          cand_lm[lid] += dl;
        }
        if (finite) {
          const double c = edges_cost(rig, cand_poses, cand_lm, edges, options.huber_delta);
          if (c <= cost) {
            poses = std::move(cand_poses);
            landmarks = std::move(cand_lm);
            cost = c;
            accepted = true;
            converged = step < kNegligibleStep;
            break;
          }
        }
        lambda = lambda == 0.0 ? options.initial_lambda : lambda * 10.0;
      }
      // a step that cannot lower the cost leaves the estimate where it is;
      // after that, or after a negligible step, the remaining iterations of
      // the stage would repeat it
      stalled = !accepted || converged;
      result.history.push_back({iteration, stage, cost, static_cast<int>(edges.size())});
    }

    if (stage == 1) {
      result.stage1_cost = cost;
      const double thr2 = options.outlier_threshold_px * options.outlier_threshold_px;
      for (const auto& e : edges) {
        if (edge_sq_error(rig, poses[e.kf], landmarks.at(e.landmark_id), e) > thr2) {
          rejected.insert({kfs[e.kf].keyframe_id, e.landmark_id});
        }
      }
    } else {
      result.stage2_cost = cost;
      double sq = 0.0;
      for (const auto& e : edges) sq += edge_sq_error(rig, poses[e.kf], landmarks.at(e.landmark_id), e);
      result.inlier_rms = edges.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(edges.size()));
    }
  }

  for (const auto& p : poses) {
    if (!p.is_finite()) return result;
  }
  result.iterations = iteration;
  result.rejected = std::move(rejected);
  result.poses_after = poses;
  for (std::size_t k = 0; k < n_kf; ++k) window.keyframes()[k].pose = poses[k];
  for (const auto& [lid, p] : landmarks) {
    if (window.observation_count(lid) >= 2) result.refined_landmarks.emplace_back(lid, p);
    window.landmarks()[lid] = p;
  }
  result.success = true;
  return result;
}

CorrectionMessage emit_correction(const WindowOptimizeResult& result, int reference_keyframe_id) {
  CorrectionMessage msg;
  msg.reference_keyframe_id = reference_keyframe_id;
  msg.source = CorrectionSource::SlidingWindow;
  if (result.poses_after.empty()) return msg;
  msg.correction = result.poses_after.back() * result.poses_before.back().inverse();
  msg.landmark_updates = result.refined_landmarks;
  return msg;
}

}  // namespace ffvio
