#include "ffvio/pose_solver.hpp"

#include <array>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace ffvio {

namespace {

// Cost charged for a point that falls behind the camera.
constexpr double kBehindPenaltyPx2 = 1e6;

}  // namespace

ReprojectionTerm reprojection_term(const PinholeIntrinsics& cam, const Transform& T_w_c,
                                   const Vec3& point_w, const Vec2& pixel) {
  ReprojectionTerm t;
  const Mat3 Rt = T_w_c.rotation_matrix().transpose();
  const Vec3 p_c = Rt * (point_w - T_w_c.translation);
  if (!(p_c.z() > 1e-9)) return t;
  t.in_front = true;
  t.error = pixel - cam.project(p_c);
  const Mat23 Jpi = cam.projection_jacobian(p_c);
  t.d_pose.leftCols<3>() = -Jpi * skew(p_c);
  t.d_pose.rightCols<3>() = Jpi;
  t.d_point = -Jpi * Rt;
  return t;
}

ReprojectionTerm reprojection_term(const PinholeIntrinsics& cam, const Transform& T_w_c0,
                                   const Transform& T_c0_c, const Vec3& point_w,
                                   const Vec2& pixel) {
  ReprojectionTerm t = reprojection_term(cam, T_w_c0 * T_c0_c, point_w, pixel);
  if (!t.in_front) return t;
  // increment on T_w_c0 seen from c: adjoint of T_c_c0
  const Transform T_c_c0 = T_c0_c.inverse();
  const Mat3 R = T_c_c0.rotation_matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = R;
  ad.bottomLeftCorner<3, 3>() = skew(T_c_c0.translation) * R;
  ad.bottomRightCorner<3, 3>() = R;
  t.d_pose = t.d_pose * ad;
  return t;
}

double huber(double s, double delta) {
  const double d2 = delta * delta;
  if (s <= d2) return s;
  return 2.0 * delta * std::sqrt(s) - d2;
}

double huber_weight(double s, double delta) {
  if (s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

double pose_cost(const PinholeIntrinsics& cam, const Transform& T_w_c,
                 std::span<const Correspondence> corr, double huber_delta) {
  const Transform T_c_w = T_w_c.inverse();
  double cost = 0.0;
  for (const auto& c : corr) {
    const Vec3 p_c = T_c_w * c.point_w;
    const double s = p_c.z() > 1e-9 ? (c.pixel - cam.project(p_c)).squaredNorm() : kBehindPenaltyPx2;
    cost += huber_delta > 0.0 ? huber(s, huber_delta) : s;
  }
  return cost;
}

PoseRefineResult refine_pose(const PinholeIntrinsics& cam, const Transform& guess,
                             std::span<const Correspondence> corr,
                             const PoseRefineOptions& options) {
  PoseRefineResult r;
  r.pose = guess;
  r.initial_cost = pose_cost(cam, guess, corr, options.huber_delta);
  r.final_cost = r.initial_cost;
  if (corr.empty()) return r;

  double lambda = 0.0;
  int failures = 0;
  for (int it = 0; it < options.max_iterations; ++it) {
    if (r.final_cost <= 1e-30) break;
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : corr) {
      const ReprojectionTerm t = reprojection_term(cam, r.pose, c.point_w, c.pixel);
      if (!t.in_front) continue;
      const double w = options.huber_delta > 0.0
                           ? huber_weight(t.error.squaredNorm(), options.huber_delta)
                           : 1.0;
      H.noalias() += w * t.d_pose.transpose() * t.d_pose;
      g.noalias() += w * t.d_pose.transpose() * t.error;
    }
    ++r.iterations;

    bool accepted = false;
    const double prev = r.final_cost;
    while (!accepted) {
      Mat6 A = H;
      A.diagonal() += lambda * H.diagonal();
      const Vec6 delta = A.ldlt().solve(-g);
      if (!delta.allFinite()) {
        failures = 3;
      } else {
        const Transform cand = retract(r.pose, delta);
        const double c = pose_cost(cam, cand, corr, options.huber_delta);
        if (c <= r.final_cost) {
          r.pose = cand;
          r.final_cost = c;
          accepted = true;
          failures = 0;
          lambda = 0.0;
          break;
        }
        ++failures;
      }
      if (failures >= 3) {
        r.diverged = true;
        return r;
      }
      lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
    }
    if (prev - r.final_cost <= options.relative_tolerance * prev) break;
  }
  return r;
}

PoseRefineResult inframe_ba(const PinholeIntrinsics& cam, const Transform& guess,
                            std::span<const Correspondence> corr) {
  return refine_pose(cam, guess, corr, PoseRefineOptions{10, 1.0, 1e-8});
}

bool degenerate_set(std::span<const Vec3> points) {
  if (points.size() < 3) return true;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::MatrixXd centered(3, points.size());
  for (std::size_t i = 0; i < points.size(); ++i) centered.col(i) = points[i] - mean;
  const Vec3 sv = Eigen::JacobiSVD<Eigen::MatrixXd>(centered).singularValues();
  return !(sv[0] > 1e-9) || sv[1] <= 1e-6 * sv[0];
}

PnpResult ransac_pnp(const PinholeIntrinsics& cam, std::span<const Correspondence> corr,
                     const Transform& initial, std::mt19937_64& rng,
                     const RansacOptions& options) {
  const std::size_t n = corr.size();
  if (n < 4) throw TrackingLost("ransac_pnp: fewer than 4 correspondences");

  const double thr2 = options.inlier_threshold_px * options.inlier_threshold_px;
  auto score = [&](const Transform& T_w_c, std::vector<bool>* mask) {
    const Transform T_c_w = T_w_c.inverse();
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p_c = T_c_w * corr[i].point_w;
      const bool ok = p_c.z() > 1e-9 && (corr[i].pixel - cam.project(p_c)).squaredNorm() < thr2;
      if (mask) (*mask)[i] = ok;
      count += ok ? 1 : 0;
    }
    return count;
  };

  const PoseRefineOptions minimal{10, 0.0, 1e-12};
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  int best_count = -1;
  Transform best_pose = initial;
  for (int it = 0; it < options.iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4;) {
      const std::size_t cand = pick(rng);
      bool dup = false;
      for (std::size_t j = 0; j < k; ++j) dup = dup || idx[j] == cand;
      if (!dup) idx[k++] = cand;
    }
    std::array<Correspondence, 4> sample{};
    std::array<Vec3, 4> pts{};
    for (std::size_t k = 0; k < 4; ++k) {
      sample[k] = corr[idx[k]];
      pts[k] = sample[k].point_w;
    }
    if (degenerate_set(pts)) continue;
    const PoseRefineResult h = refine_pose(cam, initial, sample, minimal);
    const int count = score(h.pose, nullptr);
    if (count > best_count) {
      best_count = count;
      best_pose = h.pose;
      if (static_cast<std::size_t>(count) == n) break;
    }
  }
  if (best_count < 0) throw TrackingLost("ransac_pnp: every sample was degenerate");

  PnpResult out;
  out.inliers.assign(n, false);
  score(best_pose, &out.inliers);
  std::vector<Correspondence> inl;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.inliers[i]) inl.push_back(corr[i]);
  }
  out.pose = best_pose;
  if (inl.size() >= 4) {
    const PoseRefineResult refined = refine_pose(cam, initial, inl, PoseRefineOptions{20, 0.0, 1e-12});
    std::vector<bool> mask(n, false);
    const int count = score(refined.pose, &mask);
    if (count >= best_count) {
      out.pose = refined.pose;
      out.inliers = std::move(mask);
    }
  }
  out.inlier_count = 0;
  for (bool b : out.inliers) out.inlier_count += b ? 1 : 0;
  out.low_confidence = out.inlier_count < options.min_confident_inliers;
  return out;
}

}  // namespace ffvio
