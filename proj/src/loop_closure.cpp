#include "ffvio/loop_closure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace ffvio {

PlaceSignature PlaceSignature::from_ids(int keyframe_id, std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return {keyframe_id, std::move(ids)};
}

double similarity(const PlaceSignature& a, const PlaceSignature& b) {
  if (a.landmark_ids.empty() || b.landmark_ids.empty()) return 0.0;
  std::size_t common = 0;
  auto i = a.landmark_ids.begin();
  auto j = b.landmark_ids.begin();
  while (i != a.landmark_ids.end() && j != b.landmark_ids.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) /
         static_cast<double>(std::max(a.landmark_ids.size(), b.landmark_ids.size()));
}

std::optional<std::size_t> detect_loop(const PlaceSignature& query,
                                       std::span<const PlaceSignature> database,
                                       const LoopDetectorOptions& options) {
  if (database.size() < options.temporal_guard + options.predecessors + 1) return std::nullopt;
  const std::size_t eligible = database.size() - options.temporal_guard;
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < eligible; ++i) {
    const double s = similarity(query, database[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (!(best_score > options.min_score)) return std::nullopt;
  if (best < options.predecessors) return std::nullopt;
  for (std::size_t k = 1; k <= options.predecessors; ++k) {
    if (!(similarity(query, database[best - k]) > options.min_predecessor_score)) return std::nullopt;
  }
  return best;
}

bool geometry_gate(const Transform& relative, int inliers, const GeometryThresholds& t) {
  return relative.translation.norm() < t.max_translation &&
         rotation_angle(relative) < t.max_rotation && inliers > t.min_inliers;
}

GeometryCheck geometry_check(const PinholeIntrinsics& cam, const Transform& candidate_pose,
                             std::span<const Correspondence> shared, const Transform& query_guess,
                             std::mt19937_64& rng, const GeometryThresholds& thresholds) {
  GeometryCheck out;
  if (shared.size() < 4) return out;
  try {
    const PnpResult pnp = ransac_pnp(cam, shared, query_guess, rng);
    out.query_pose = pnp.pose;
    out.inliers = pnp.inlier_count;
    out.relative = candidate_pose.inverse() * pnp.pose;
    out.pass = geometry_gate(out.relative, out.inliers, thresholds);
  } catch (const TrackingLost&) {
    out.pass = false;
  }
  return out;
}

void PoseGraph::validate() const {
  for (const auto& e : edges) {
    if (e.from >= vertices.size() || e.to >= vertices.size() || e.from == e.to) {
      throw std::invalid_argument("PoseGraph: edge endpoint out of range");
    }
    if (!e.loop && e.to != e.from + 1) {
      throw std::invalid_argument("PoseGraph: adjacent edges must join consecutive vertices");
    }
  }
}

Vec6 pose_graph_residual(const Transform& T_m, const Transform& T_n, const Transform& z) {
  return se3_log(z.inverse() * T_m.inverse() * T_n);
}

double pose_graph_cost(const PoseGraph& graph, std::span<const Transform> poses,
                       const PoseGraphOptions& options) {
  double cost = 0.0;
  for (const auto& e : graph.edges) {
    const double s = pose_graph_residual(poses[e.from], poses[e.to], e.measurement).squaredNorm();
    cost += e.loop ? huber(s, options.loop_huber_delta) : s;
  }
  return cost;
}

PoseGraphResult pose_graph_optimize(const PoseGraph& graph, const PoseGraphOptions& options) {
  graph.validate();
  PoseGraphResult r;
  r.poses = graph.vertices;
  const std::size_t n = graph.vertices.size();
  if (n < 2) {
    r.success = true;
    return r;
  }
  r.initial_cost = pose_graph_cost(graph, r.poses, options);
  r.final_cost = r.initial_cost;
  r.cost_history.push_back(r.initial_cost);

  const int dim = static_cast<int>(6 * (n - 1));
  constexpr double h = 1e-6;
  std::vector<Transform> poses = graph.vertices;
  double cost = r.initial_cost;

  bool converged = false;
  for (int it = 0; it < options.max_iterations && !converged; ++it) {
    if (cost <= 1e-30) break;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& e : graph.edges) {
      const Vec6 res = pose_graph_residual(poses[e.from], poses[e.to], e.measurement);
      const double w = e.loop ? huber_weight(res.squaredNorm(), options.loop_huber_delta) : 1.0;
      Mat6 J[2];
      const std::size_t ends[2] = {e.from, e.to};
      for (int s = 0; s < 2; ++s) {
        for (int j = 0; j < 6; ++j) {
          Vec6 d = Vec6::Zero();
          d[j] = h;
          std::vector<Transform> plus = {poses[e.from], poses[e.to]};
          std::vector<Transform> minus = plus;
          plus[s] = retract(plus[s], d);
          minus[s] = retract(minus[s], -d);
          J[s].col(j) = (pose_graph_residual(plus[0], plus[1], e.measurement) -
                         pose_graph_residual(minus[0], minus[1], e.measurement)) / (2.0 * h);
        }
      }
      for (int a = 0; a < 2; ++a) {
        if (ends[a] == 0) continue;
        const int ia = static_cast<int>(6 * (ends[a] - 1));
        g.segment<6>(ia) += w * J[a].transpose() * res;
        for (int b = 0; b < 2; ++b) {
          if (ends[b] == 0) continue;
          const int ib = static_cast<int>(6 * (ends[b] - 1));
          const Mat6 blk = w * J[a].transpose() * J[b];
          for (int u = 0; u < 6; ++u) {
            for (int v = 0; v < 6; ++v) trip.emplace_back(ia + u, ib + v, blk(u, v));
          }
        }
      }
    }
    Eigen::SparseMatrix<double> H(dim, dim);
    H.setFromTriplets(trip.begin(), trip.end());

    bool accepted = false;
    double lambda = 0.0;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::SparseMatrix<double> A = H;
      if (lambda > 0.0) {
        for (int i = 0; i < dim; ++i) A.coeffRef(i, i) += lambda;
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
      if (solver.info() == Eigen::Success) {
        const Eigen::VectorXd dx = solver.solve(-g);
        if (solver.info() == Eigen::Success && dx.allFinite()) {
          std::vector<Transform> cand = poses;
          for (std::size_t k = 1; k < n; ++k) cand[k] = retract(poses[k], dx.segment<6>(6 * (k - 1)));
          const double c = pose_graph_cost(graph, cand, options);
          if (std::isfinite(c) && c <= cost) {
            poses = std::move(cand);
            const double prev = cost;
            cost = c;
            accepted = true;
            r.cost_history.push_back(cost);
            ++r.iterations;
            converged = prev - cost <= options.relative_tolerance * prev ||
                        dx.lpNorm<Eigen::Infinity>() < options.step_tolerance;
            break;
          }
        }
      }
      lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
    }
    if (!accepted) break;
  }

  for (const auto& p : poses) {
    if (!p.is_finite()) return r;
  }
  r.poses = std::move(poses);
  r.final_cost = cost;
  r.success = true;
  return r;
}

LoopCloser::LoopCloser(const CameraRig& rig, const Options& options)
    : rig_(rig), options_(options), rng_(options.seed) {}

std::optional<CorrectionMessage> LoopCloser::process(const KeyframeMessage& kf) {
  ArchivedKeyframe a;
  a.keyframe_id = kf.keyframe_id;
  a.timestamp = kf.timestamp;
  a.pose = kf.pose;
  std::vector<int> ids;
  for (const auto& lm : kf.landmarks) {
    a.landmarks[lm.landmark_id] = lm.position_w;
    a.pixels[lm.landmark_id] = lm.pixel_c0;
    ids.push_back(lm.landmark_id);
  }
  a.signature = PlaceSignature::from_ids(kf.keyframe_id, std::move(ids));

  const std::size_t idx = archive_.size();
  const auto candidate = detect_loop(a.signature, signatures_, options_.detector);
  archive_.push_back(a);
  signatures_.push_back(a.signature);
  graph_.vertices.push_back(a.pose);
  if (idx > 0) graph_.add_adjacent(idx - 1, idx, archive_[idx - 1].pose.inverse() * a.pose);
  struct MarkSeen {
    LoopCloser* self;
    std::size_t idx;
    ~MarkSeen() {
      for (const auto& [id, p] : self->archive_[idx].landmarks) self->last_seen_[id] = idx;
    }
  } mark{this, idx};
  if (!candidate) return std::nullopt;

  const ArchivedKeyframe& cand = archive_[*candidate];
  LoopEvent ev{kf.keyframe_id, cand.keyframe_id, false, 0, similarity(a.signature, cand.signature)};
  std::vector<Correspondence> shared;
  for (const auto& [id, px] : a.pixels) {
    if (!cand.landmarks.contains(id)) continue;
    const std::size_t newest = last_seen_.at(id);
    shared.push_back({archive_[newest].landmarks.at(id), px});
  }
  const GeometryCheck gc = geometry_check(rig_.cam0, cand.pose * rig_.T_i_c0, shared,
                                          a.pose * rig_.T_i_c0, rng_, options_.geometry);
  ev.inliers = gc.inliers;
  if (!gc.pass) {
    ++rejected_;
    events_.push_back(ev);
    return std::nullopt;
  }
  const Transform query_body = gc.query_pose * rig_.T_i_c0.inverse();
  graph_.add_loop(*candidate, idx, cand.pose.inverse() * query_body);

  const PoseGraphResult res = pose_graph_optimize(graph_, options_.graph);
  if (!res.success) {
    ++rejected_;
    events_.push_back(ev);
    return std::nullopt;
  }
  ++accepted_;
  ev.accepted = true;
  events_.push_back(ev);

  for (std::size_t k = 0; k < archive_.size(); ++k) {
    const Transform delta = res.poses[k] * archive_[k].pose.inverse();
    for (auto& [id, p] : archive_[k].landmarks) p = delta * p;
    archive_[k].pose = res.poses[k];
  }
  const Transform correction = res.poses[idx] * graph_.vertices[idx].inverse();
  graph_.vertices = res.poses;

  CorrectionMessage msg;
  msg.reference_keyframe_id = kf.keyframe_id;
  msg.source = CorrectionSource::LoopClosure;
  msg.correction = correction;
  return msg;
}

std::vector<std::vector<double>> LoopCloser::similarity_matrix() const {
  const std::size_t n = signatures_.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    m[i][i] = signatures_[i].landmark_ids.empty() ? 0.0 : 1.0;
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = similarity(signatures_[i], signatures_[j]);
  }
  return m;
}

}  // namespace ffvio
