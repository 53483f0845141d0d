#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "ffvio/frontend.hpp"
#include "ffvio/scenario_config.hpp"
#include "ffvio/simulator.hpp"

using namespace ffvio;

namespace {

Quaternion random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

Vec3 gravity_in_body(const Quaternion& q) { return q.conjugate().rotate(Vec3::UnitZ()); }

ScenarioConfig short_figure8(double duration) {
  ScenarioConfig sc = load_run_config(FFVIO_CONFIG_DIR "/figure8_noise_free.yaml").scenario;
  sc.trajectory.duration = duration;
  return sc;
}

struct Replay {
  std::vector<FrameResult> results;
  MeasurementStream stream;
};

// Runs the frontend alone over a stream, IMU segments cut at frame times.
Replay replay(const ScenarioConfig& sc, const FrontendOptions& opt) {
  Replay r;
  r.stream = generate(sc);
  Frontend fe(sc.rig, r.stream.initial_state, opt);
  std::size_t cursor = 0;
  for (const auto& frame : r.stream.frames) {
    const std::size_t begin = cursor;
    while (cursor < r.stream.imu.size() && r.stream.imu[cursor].timestamp <= frame.timestamp + 1e-12) ++cursor;
    r.results.push_back(fe.process_frame(frame, std::span(r.stream.imu).subspan(begin, cursor - begin)));
  }
  return r;
}

}  // namespace

TEST(Euler, RoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.4, 1.4);
  for (int i = 0; i < 200; ++i) {
    const EulerZYX e{u(rng), u(rng), 2 * u(rng)};
    const EulerZYX back = to_euler_zyx(from_euler_zyx(e));
    EXPECT_NEAR(back.roll, e.roll, 1e-12);
    EXPECT_NEAR(back.pitch, e.pitch, 1e-12);
    EXPECT_NEAR(back.yaw, e.yaw, 1e-12);
  }
  // yaw is about world z: a pure yaw leaves body z vertical
  const Quaternion q = from_euler_zyx({0.0, 0.0, 1.0});
  EXPECT_LT((q.rotate(Vec3::UnitZ()) - Vec3::UnitZ()).norm(), 1e-15);
}

TEST(Feedforward, Examples) {
  const Quaternion q = from_euler_zyx({0.1, -0.2, 0.7});
  EXPECT_TRUE(same_rotation(rollpitch_feedforward(q, q), q, 1e-12));

  const Quaternion out = rollpitch_feedforward(from_euler_zyx({0.1, 0.0, 1.0}), from_euler_zyx({0.0, 0.0, 2.0}));
  const EulerZYX e = to_euler_zyx(out);
  EXPECT_NEAR(e.roll, 0.0, 1e-12);
  EXPECT_NEAR(e.pitch, 0.0, 1e-12);
  EXPECT_NEAR(e.yaw, 1.0, 1e-12);
}

TEST(Feedforward, GravityFromImuYawFromVision) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const Quaternion visual = random_quaternion(rng);
    const Quaternion imu = random_quaternion(rng);
    if (std::abs(to_euler_zyx(imu).pitch) > 1.5 || std::abs(to_euler_zyx(visual).pitch) > 1.5) continue;
    const Quaternion out = rollpitch_feedforward(visual, imu);
    EXPECT_NEAR(out.norm(), 1.0, 1e-12);
    const Vec3 g_out = gravity_in_body(out);
    const Vec3 g_imu = gravity_in_body(imu);
    EXPECT_LT(std::acos(std::clamp(g_out.dot(g_imu), -1.0, 1.0)), 1e-7);
    EXPECT_LT((g_out - g_imu).norm(), 1e-9);
    EXPECT_NEAR(std::remainder(to_euler_zyx(out).yaw - to_euler_zyx(visual).yaw, 2 * std::numbers::pi), 0.0,
                1e-9);
    EXPECT_TRUE(same_rotation(rollpitch_feedforward(out, imu), out, 1e-12));
  }
}

TEST(Feedforward, SkippedNearGimbalLock) {
  const Quaternion visual = from_euler_zyx({0.2, 0.1, 0.3});
  const Quaternion imu = from_euler_zyx({0.0, std::numbers::pi / 2 - 1e-4, 0.0});
  EXPECT_TRUE(same_rotation(rollpitch_feedforward(visual, imu), visual, 1e-15));
}

TEST(KeyframeDecision, Thresholds) {
  EXPECT_TRUE(keyframe_decision(Transform{}, std::nullopt));
  const Transform small{Quaternion::from_axis_angle(Vec3::UnitZ(), 0.1), Vec3(0.05, 0, 0)};
  EXPECT_FALSE(keyframe_decision(small, Transform{}));
  EXPECT_TRUE(keyframe_decision(Transform{Quaternion{}, Vec3(0.15, 0, 0)}, Transform{}));
  EXPECT_TRUE(keyframe_decision(Transform{Quaternion::from_axis_angle(Vec3::UnitX(), 0.25), Vec3::Zero()},
                                Transform{}));
  EXPECT_FALSE(keyframe_decision(Transform{Quaternion{}, Vec3(0.1, 0, 0)}, Transform{}));
}

TEST(Frontend, NoiseFreeFigureEightTracksGroundTruth) {
  const Replay r = replay(short_figure8(8.0), FrontendOptions{});
  ASSERT_EQ(r.results.size(), r.stream.ground_truth.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < r.results.size(); ++i) {
    EXPECT_FALSE(r.results[i].tracking_lost);
    worst = std::max(worst, (r.results[i].state.p - r.stream.ground_truth[i].pose.translation).norm());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Frontend, KeyframesRespectMotionThresholds) {
  const Replay r = replay(short_figure8(8.0), FrontendOptions{});
  std::optional<Transform> last;
  int count = 0;
  for (const auto& fr : r.results) {
    if (!fr.keyframe) continue;
    const Transform pose = fr.keyframe->pose;
    if (last) {
      const Transform d = last->inverse() * pose;
      EXPECT_TRUE(d.translation.norm() > 0.1 || rotation_angle(d) > 0.2);
      EXPECT_EQ(fr.keyframe->keyframe_id, count);
    }
    last = pose;
    ++count;
  }
  // about 8 m of path at one keyframe per 0.1 m
  EXPECT_GT(count, 50);
  EXPECT_TRUE(r.results.front().keyframe.has_value());
}

TEST(Frontend, ShortBlackoutFallsBackToImu) {
  ScenarioConfig sc = short_figure8(4.0);
  sc.camera.blackouts = {{2.0, 2.2}};
  const Replay r = replay(sc, FrontendOptions{});
  int lost = 0;
  for (std::size_t i = 0; i < r.results.size(); ++i) {
    const FrameResult& fr = r.results[i];
    const bool in_blackout = fr.timestamp >= 2.0 - 1e-9 && fr.timestamp < 2.2 - 1e-9;
    EXPECT_EQ(fr.tracking_lost, in_blackout) << fr.timestamp;
    if (fr.tracking_lost) {
      ++lost;
      EXPECT_FALSE(fr.keyframe.has_value());
      // IMU-only output stays close on noise-free data
      EXPECT_LT((fr.state.p - r.stream.ground_truth[i].pose.translation).norm(), 0.01);
    }
  }
  EXPECT_EQ(lost, 4);
  EXPECT_LT((r.results.back().state.p - r.stream.ground_truth.poses().back().pose.translation).norm(), 1e-3);
}

TEST(Frontend, LongBlackoutIsHardFailure) {
  ScenarioConfig sc = short_figure8(4.0);
  sc.camera.blackouts = {{2.0, 3.0}};
  EXPECT_THROW(replay(sc, FrontendOptions{}), HardFailure);
}

TEST(Frontend, BiasFeedbackConvergesOnBiasedLine) {
  ScenarioConfig sc = load_run_config(FFVIO_CONFIG_DIR "/biased_line.yaml").scenario;
  const Replay r = replay(sc, FrontendOptions{});
  const ImuBias& b = r.results.back().bias;
  EXPECT_LT((b.gyro - sc.imu.gyro_bias).norm(), 0.2 * sc.imu.gyro_bias.norm());
  EXPECT_LT((b.accel - sc.imu.accel_bias).norm(), 0.2 * sc.imu.accel_bias.norm());

  FrontendOptions off;
  off.bias_feedback = false;
  const Replay r_off = replay(sc, off);
  EXPECT_EQ(r_off.results.back().bias.gyro, Vec3::Zero());
}

TEST(Frontend, CorrectionComposesOntoState) {
  const ScenarioConfig sc = short_figure8(1.0);
  const MeasurementStream stream = generate(sc);
  Frontend fe(sc.rig, stream.initial_state, FrontendOptions{});
  fe.process_frame(stream.frames.front(), {});
  const Transform before = fe.state().pose();
  CorrectionMessage msg;
  msg.correction = Transform{Quaternion::from_axis_angle(Vec3::UnitZ(), 0.01), Vec3(0.01, 0, 0)};
  fe.apply_correction(msg);
  EXPECT_LT((fe.state().pose().matrix() - (msg.correction * before).matrix()).norm(), 1e-12);
  CorrectionMessage bad;
  bad.correction.translation = Vec3(NAN, 0, 0);
  EXPECT_THROW(fe.apply_correction(bad), std::invalid_argument);
}

TEST(Frontend, RejectsOutOfOrderFrames) {
  const ScenarioConfig sc = short_figure8(1.0);
  const MeasurementStream stream = generate(sc);
  Frontend fe(sc.rig, stream.initial_state, FrontendOptions{});
  fe.process_frame(stream.frames[0], {});
  EXPECT_THROW(fe.process_frame(stream.frames[0], stream.imu), std::invalid_argument);
}
