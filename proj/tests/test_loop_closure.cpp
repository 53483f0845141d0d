#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "drift_injection.hpp"
#include "loop_signatures.hpp"
#include "ffvio/loop_closure.hpp"

using namespace ffvio;
using namespace ffvio::loop_signatures;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<Transform> circle_poses(int n, double radius) {
  std::vector<Transform> out;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * k / n;
    out.push_back(Transform{Quaternion::from_axis_angle(Vec3::UnitZ(), a + std::numbers::pi / 2),
                            Vec3(radius * std::cos(a), radius * std::sin(a), 0)});
  }
  return out;
}

}  // namespace

TEST(Similarity, Examples) {
  const auto a = PlaceSignature::from_ids(0, {1, 2, 3});
  EXPECT_DOUBLE_EQ(similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(similarity(a, PlaceSignature::from_ids(1, {4, 5})), 0.0);
  std::vector<int> ia;
  std::vector<int> ib;
  for (int i = 0; i < 40; ++i) ia.push_back(i);
  for (int i = 20; i < 70; ++i) ib.push_back(i);
  EXPECT_DOUBLE_EQ(similarity(PlaceSignature::from_ids(0, ia), PlaceSignature::from_ids(1, ib)), 0.4);
  EXPECT_DOUBLE_EQ(similarity(a, PlaceSignature{}), 0.0);
}

TEST(Similarity, SymmetricAndOneOnlyForEqualSets) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    std::vector<int> x;
    std::vector<int> y;
    for (int k = 0; k < 8; ++k) {
      x.push_back(static_cast<int>(rng() % 10));
      y.push_back(static_cast<int>(rng() % 10));
    }
    const auto a = PlaceSignature::from_ids(0, x);
    const auto b = PlaceSignature::from_ids(1, y);
    EXPECT_EQ(similarity(a, b), similarity(b, a));
    EXPECT_EQ(similarity(a, b) == 1.0, a.landmark_ids == b.landmark_ids);
  }
  EXPECT_EQ(PlaceSignature::from_ids(0, {3, 1, 3, 2}).landmark_ids, (std::vector<int>{1, 2, 3}));
}

TEST(DetectLoop, Examples) {
  const PlaceSignature q = query();
  {
    const auto db = database({0.05, 0.16, 0.17, 0.18, 0.25, 0.05});
    const auto c = detect_loop(q, db);
    ASSERT_TRUE(c.has_value());
    EXPECT_EQ(*c, 4U);
  }
  EXPECT_FALSE(detect_loop(q, database({0.15, 0.15, 0.15, 0.15})).has_value());
  EXPECT_FALSE(detect_loop(q, database({0.2, 0.2, 0.1, 0.3})).has_value());
  // too small a database
  EXPECT_FALSE(detect_loop(q, database({0.3, 0.3, 0.3})).has_value());
  // recent entries never count even when they match perfectly
  EXPECT_FALSE(detect_loop(q, database({0.0, 0.0, 0.0, 0.0})).has_value());
}

TEST(DetectLoop, ExhaustiveThresholdEnumeration) {
  const PlaceSignature q = query();
  const std::vector<double> levels = {0.1, 0.15, 0.16, 0.2, 0.21, 0.3};
  int accepted = 0;
  for (double s0 : levels) {
    for (double s1 : levels) {
      for (double s2 : levels) {
        for (double s3 : levels) {
          const std::vector<double> scores = {s0, s1, s2, s3};
          const auto db = database(scores);
          // oracle: the first strict maximum, above 0.2, with three predecessors above 0.15
          std::size_t best = 0;
          for (std::size_t i = 1; i < scores.size(); ++i) {
            if (scores[i] > scores[best]) best = i;
          }
          bool expect = scores[best] > 0.2 + 1e-12 && best >= 3;
          for (std::size_t k = 1; expect && k <= 3; ++k) expect = scores[best - k] > 0.15 + 1e-12;
          const auto c = detect_loop(q, db);
          ASSERT_EQ(c.has_value(), expect) << s0 << " " << s1 << " " << s2 << " " << s3;
          if (c) {
            EXPECT_EQ(*c, best);
            ++accepted;
          }
        }
      }
    }
  }
  EXPECT_GT(accepted, 0);
}

TEST(GeometryGate, Examples) {
  auto rel = [](double t, double deg) {
    return Transform{Quaternion::from_axis_angle(Vec3(0, 0, 1), deg * kDeg), Vec3(t, 0, 0)};
  };
  EXPECT_TRUE(geometry_gate(rel(2, 30), 50));
  EXPECT_FALSE(geometry_gate(rel(4, 10), 100));
  EXPECT_FALSE(geometry_gate(rel(1, 20), 25));
}

TEST(GeometryGate, ExhaustiveBoundaries) {
  for (double t : {0.0, 2.99, 3.0, 3.01}) {
    // an exact 60 degree rotation is below round-off of the angle extraction
    for (double deg : {0.0, 59.9, 60.0 - 1e-7, 60.0 + 1e-7, 60.1}) {
      for (int inl : {29, 30, 31}) {
        const Transform r{Quaternion::from_axis_angle(Vec3(1, 1, 0), deg * kDeg), Vec3(0, t, 0)};
        const bool expect = t < 3.0 && deg < 60.0 && inl > 30;
        EXPECT_EQ(geometry_gate(r, inl), expect) << t << " " << deg << " " << inl;
      }
    }
  }
}

TEST(GeometryCheck, RecoversRelativeMotion) {
  const PinholeIntrinsics cam;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const Transform cand{Quaternion{}, Vec3::Zero()};
  const Transform query{Quaternion::from_axis_angle(Vec3(0, 1, 0), 0.2), Vec3(0.5, 0.1, -0.2)};
  std::vector<Correspondence> shared;
  while (shared.size() < 50) {
    const Vec3 X(2 * u(rng), 1.5 * u(rng), 4 + u(rng));
    const auto px = project_point(cam, query, X);
    if (px && cam.in_bounds(*px)) shared.push_back({X, *px});
  }
  const Transform guess = query * Transform{Quaternion::from_axis_angle(Vec3(1, 0, 0), 0.02), Vec3(0.05, 0, 0)};
  const GeometryCheck gc = geometry_check(cam, cand, shared, guess, rng);
  EXPECT_TRUE(gc.pass);
  EXPECT_EQ(gc.inliers, 50);
  EXPECT_LT((gc.relative.translation - query.translation).norm(), 1e-8);

  const GeometryCheck few = geometry_check(cam, cand, std::span(shared).first(20), guess, rng);
  EXPECT_FALSE(few.pass);
  EXPECT_FALSE(geometry_check(cam, cand, std::span(shared).first(3), guess, rng).pass);
}

TEST(PoseGraph, ConsistentGraphUnchanged) {
  const auto truth = circle_poses(20, 2.0);
  PoseGraph g;
  g.vertices = truth;
  for (std::size_t k = 1; k < truth.size(); ++k) g.add_adjacent(k - 1, k, truth[k - 1].inverse() * truth[k]);
  g.add_loop(0, 19, truth[0].inverse() * truth[19]);
  const PoseGraphResult r = pose_graph_optimize(g);
  ASSERT_TRUE(r.success);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    EXPECT_LT((r.poses[k].matrix() - truth[k].matrix()).norm(), 1e-10);
  }
}

TEST(PoseGraph, StraightChainDriftRemoved) {
  std::vector<Transform> truth;
  for (int k = 0; k < 50; ++k) truth.push_back(Transform{Quaternion{}, Vec3(0.2 * k, 0, 0)});
  PoseGraph g;
  g.vertices.push_back(truth[0]);
  const Transform step_measured{Quaternion{}, Vec3(0.21, 0, 0)};
  for (std::size_t k = 1; k < truth.size(); ++k) {
    g.vertices.push_back(g.vertices.back() * step_measured);
    g.add_adjacent(k - 1, k, step_measured);
  }
  g.add_loop(0, 49, truth[0].inverse() * truth[49]);
  const double before = (g.vertices.back().translation - truth.back().translation).norm();
  const PoseGraphResult r = pose_graph_optimize(g);
  ASSERT_TRUE(r.success);
  const double after = (r.poses.back().translation - truth.back().translation).norm();
  EXPECT_NEAR(before, 0.49, 1e-9);
  EXPECT_LT(after, 0.1 * before);
  EXPECT_EQ(r.poses.front().matrix(), g.vertices.front().matrix());
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) EXPECT_LE(r.cost_history[i], r.cost_history[i - 1]);
}

TEST(PoseGraph, CorruptedAdjacentEdgeAbsorbed) {
  const auto truth = circle_poses(30, 2.0);
  PoseGraph g;
  g.vertices = truth;
  for (std::size_t k = 1; k < truth.size(); ++k) {
    Transform z = truth[k - 1].inverse() * truth[k];
    if (k == 10) z.translation += Vec3(0.5, 0, 0);
    g.add_adjacent(k - 1, k, z);
  }
  for (std::size_t k = 1; k < truth.size(); ++k) g.vertices[k] = g.vertices[k - 1] * g.edges[k - 1].measurement;
  g.add_loop(0, 29, truth[0].inverse() * truth[29]);
  const PoseGraphResult r = pose_graph_optimize(g);
  ASSERT_TRUE(r.success);
  const double loop_res = pose_graph_residual(r.poses[0], r.poses[29], g.edges.back().measurement).norm();
  const double corrupted_res = pose_graph_residual(r.poses[9], r.poses[10], g.edges[9].measurement).norm();
  EXPECT_LT(loop_res, 0.5);
  EXPECT_GT(corrupted_res, 0.0);
  EXPECT_LT(r.final_cost, r.initial_cost);
}

TEST(PoseGraph, RejectsBrokenChain) {
  PoseGraph g;
  g.vertices = circle_poses(4, 1.0);
  g.add_adjacent(0, 2, Transform{});
  EXPECT_THROW(pose_graph_optimize(g), std::invalid_argument);
}

TEST(LoopClosure, TwoCircleDriftReduced) {
  const auto ex = drift::run_drift_experiment(FFVIO_CONFIG_DIR "/two_circle.yaml");
  ASSERT_TRUE(ex.optimized);
  EXPECT_GT(ex.loops_accepted, 10);
  EXPECT_GT(ex.endpoint_before, 0.1);
  EXPECT_LT(ex.endpoint_after, 0.5 * ex.endpoint_before);
}

TEST(LoopClosure, TwoCircleSimilarityBand) {
  const auto ex = drift::run_drift_experiment(FFVIO_CONFIG_DIR "/two_circle.yaml");
  const double lap = 2 * std::numbers::pi * 2.0;
  double travelled = 0.0;
  std::vector<double> arc = {0.0};
  for (std::size_t k = 1; k < ex.truth.size(); ++k) {
    travelled += (ex.truth[k].translation - ex.truth[k - 1].translation).norm();
    arc.push_back(travelled);
  }
  int counterparts = 0;
  for (std::size_t q = 0; q < ex.truth.size(); ++q) {
    if (arc[q] < lap + 0.5) continue;
    for (std::size_t c = 0; c < ex.truth.size(); ++c) {
      if (arc[c] > lap - 0.5) break;
      const double phase = std::remainder(arc[q] - lap - arc[c], lap);
      const double s = similarity(ex.signatures[q], ex.signatures[c]);
      if (std::abs(phase) < 0.05) {
        EXPECT_GT(s, 0.2);
        ++counterparts;
      } else if (std::abs(phase) > lap / 3) {
        EXPECT_LT(s, 0.1);
      }
    }
  }
  EXPECT_GT(counterparts, 50);
}

TEST(LoopCloser, ArchivesAndIgnoresRecentKeyframes) {
  LoopCloser lc(CameraRig::euroc_like(), LoopCloser::Options{});
  for (int k = 0; k < 15; ++k) {
    KeyframeMessage kf;
    kf.keyframe_id = k;
    kf.timestamp = k;
    kf.pose = Transform{Quaternion{}, Vec3(0.1 * k, 0, 0)};
    for (int i = 0; i < 40; ++i) kf.landmarks.push_back({i, Vec3(5, 0.1 * i, 1), Vec2(100 + i, 100), std::nullopt});
    EXPECT_FALSE(lc.process(kf).has_value());
  }
  EXPECT_EQ(lc.archive().size(), 15U);
  EXPECT_EQ(lc.accepted() + lc.rejected(), 0);
  const auto m = lc.similarity_matrix();
  EXPECT_DOUBLE_EQ(m[0][14], 1.0);
}
