// Runs the ten acceptance checks and prints one PASS/FAIL line for each.
// Exit status is the number of failed checks.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "drift_injection.hpp"
#include "ffvio/frontend.hpp"
#include "ffvio/harness.hpp"
#include "ffvio/imu.hpp"
#include "ffvio/landmark_map.hpp"
#include "loop_signatures.hpp"
#include "window_scene.hpp"

using namespace ffvio;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig config(const char* name) { return load_run_config(std::string(FFVIO_CONFIG_DIR "/") + name); }

Quaternion random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

Outcome round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioRun run = run_scenario(config("figure8_noise_free.yaml"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const RunReport& r = run.report;
  return {!r.hard_failure && r.ate_rmse < 1e-3 && secs < 30.0,
          fmt("ATE %.3g m on %.1f m, %.1f s", r.ate_rmse, r.trajectory_length, secs)};
}

Outcome accuracy() {
  bool pass = true;
  std::string detail = "ATE per seed:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg = config("figure8.yaml");
    apply_seed(cfg, seed);
    const RunReport r = run_scenario(cfg).report;
    pass = pass && !r.hard_failure && r.ate_rmse <= 0.31;
    detail += fmt(" %.4f (%.3f%%)", r.ate_rmse, 100.0 * r.ate_over_length);
  }
  return {pass, detail};
}

Outcome bias_feedback() {
  const RunConfig on = config("biased_line.yaml");
  RunConfig off = on;
  set_loop(off.estimator, "bias-feedback", false);
  const RunReport r_on = run_scenario(on).report;
  const RunReport r_off = run_scenario(off).report;
  if (r_on.hard_failure || r_off.hard_failure || r_on.bias_trace.size() <= 100) return {false, "run failed"};
  const ImuBias& est = r_on.bias_trace[100].second;
  const ImuBias truth{on.scenario.imu.accel_bias, on.scenario.imu.gyro_bias};
  const double gyro_rel = (est.gyro - truth.gyro).norm() / truth.gyro.norm();
  const double accel_rel = (est.accel - truth.accel).norm() / truth.accel.norm();
  const double ratio = r_on.ate_rmse_imu_rate / r_off.ate_rmse_imu_rate;
  const double frame_ratio = r_on.ate_rmse / r_off.ate_rmse;
  return {gyro_rel < 0.2 && accel_rel < 0.2 && ratio <= 0.5,
          fmt("bias error at frame 100: gyro %.1f%% accel %.1f%%; ATE ratio %.3f (frame rate %.3f)",
              100 * gyro_rel, 100 * accel_rel, ratio, frame_ratio)};
}

Outcome madgwick() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  const double rate = 200.0;
  const double accel_sigma = 2e-3 * std::sqrt(rate);
  const double gyro_sigma = 1.7e-4 * std::sqrt(rate);
  NavState s;
  s.q = Quaternion::from_axis_angle(Vec3(1, 0.5, 0), 5 * kDeg);
  for (int k = 0; k < 5 * 200; ++k) {
    const ImuSample m{0, Vec3(n(rng) * accel_sigma, n(rng) * accel_sigma, 9.81 + n(rng) * accel_sigma),
                      Vec3(n(rng), n(rng), n(rng)) * gyro_sigma};
    s.q = fused_orientation_step(s, m, 1.0 / rate, {});
  }
  const EulerZYX e = to_euler_zyx(s.q);
  const double tilt = std::hypot(e.roll, e.pitch);

  double worst = 0.0;
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const Quaternion q = random_quaternion(rng);
    const Vec3 a = Vec3(n(rng), n(rng), n(rng)).normalized();
    const auto o = madgwick_objective(q, a);
    for (int c = 0; c < 4; ++c) {
      Vec4 plus = q.coeffs();
      Vec4 minus = q.coeffs();
      plus[c] += h;
      minus[c] -= h;
      const Vec3 fd = (madgwick_objective(quaternion_from_coeffs(plus), a).residual -
                       madgwick_objective(quaternion_from_coeffs(minus), a).residual) /
                      (2 * h);
      worst = std::max(worst, (fd - o.jacobian.col(c)).norm());
    }
  }
  return {tilt < 0.5 * kDeg && worst < 1e-6,
          fmt("tilt after 5 s %.4f deg; worst Jacobian mismatch %.2g", tilt / kDeg, worst)};
}

Outcome sliding_window() {
  using namespace window_scene;
  std::mt19937_64 rng(4);
  const Scene s = make_scene(8, 40, rng);
  SlidingWindow w = filled_window(s);
  perturb(w, rng);
  const WindowOptimizeResult r = optimize_window(w);
  double worst = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Transform truth = s.body_poses[k] * s.rig.T_i_c0;
    worst = std::max(worst, (w.keyframes()[k].pose.translation - truth.translation).norm());
  }
  for (const auto& [id, p] : w.landmarks()) worst = std::max(worst, (p - s.points[id]).norm());
  int stage1 = 0, stage2 = 0;
  for (const auto& it : r.history) (it.stage == 1 ? stage1 : stage2)++;
  const bool schedule = r.iterations == 20 && stage1 == 10 && stage2 == 10;

  // 5% of the edges moved by 30 px, several scenes
  std::size_t true_pos = 0, rejected = 0, corrupted_total = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 5; ++trial) {
    const Scene sc = make_scene(8, 60, rng);
    SlidingWindow cw(sc.rig);
    std::set<EdgeKey> corrupted;
    for (int k = 0; k < 8; ++k) {
      KeyframeMessage kf = keyframe(sc, k, sc.points);
      for (auto& lm : kf.landmarks) {
        if (u(rng) < 0.05) {
          lm.pixel_c0 += 30.0 * Vec2(n(rng), n(rng)).normalized();
          corrupted.insert({k, lm.landmark_id});
        }
      }
      cw.insert(kf);
    }
    perturb(cw, rng);
    const WindowOptimizeResult cr = optimize_window(cw);
    if (!cr.success) return {false, "corrupted window failed"};
    for (const auto& e : cr.rejected) true_pos += corrupted.contains(e) ? 1 : 0;
    rejected += cr.rejected.size();
    corrupted_total += corrupted.size();
  }
  const double precision = rejected ? static_cast<double>(true_pos) / static_cast<double>(rejected) : 0.0;
  const double recall = static_cast<double>(true_pos) / static_cast<double>(corrupted_total);
  return {r.success && worst < 1e-5 && schedule && precision >= 0.95,
          fmt("worst error %.2g m; iterations %d (%d + %d); outlier precision %.3f recall %.3f", worst,
              r.iterations, stage1, stage2, precision, recall)};
}

Outcome iir_statistics() {
  const double sigma = 0.05;
  const double coeff = 0.8;
  const int trials = 10000;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, sigma);
  double sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    double x = noise(rng);
    for (int k = 1; k < 100; ++k) x = iir_update(Vec3(x, 0, 0), Vec3(noise(rng), 0, 0), coeff).x();
    sum_sq += x * x;
  }
  const double var = sum_sq / trials;
  const double expected = sigma * sigma * (1 - coeff) / (1 + coeff);
  return {std::abs(var - expected) < 0.2 * expected,
          fmt("variance %.4g vs %.4g (%.1f%% off)", var, expected, 100 * std::abs(var / expected - 1))};
}

bool threshold_enumeration() {
  using namespace loop_signatures;
  const PlaceSignature q = query();
  const std::vector<double> levels = {0.1, 0.15, 0.16, 0.2, 0.21, 0.3};
  for (double s0 : levels) {
    for (double s1 : levels) {
      for (double s2 : levels) {
        for (double s3 : levels) {
          const std::vector<double> scores = {s0, s1, s2, s3};
          std::size_t best = 0;
          for (std::size_t i = 1; i < scores.size(); ++i) {
            if (scores[i] > scores[best]) best = i;
          }
          bool expect = scores[best] > 0.2 + 1e-12 && best >= 3;
          for (std::size_t k = 1; expect && k <= 3; ++k) expect = scores[best - k] > 0.15 + 1e-12;
          const auto c = detect_loop(q, database(scores));
          if (c.has_value() != expect || (c && *c != best)) return false;
        }
      }
    }
  }
  for (double t : {0.0, 2.99, 3.0, 3.01}) {
    for (double deg : {0.0, 59.9, 60.0 - 1e-7, 60.0 + 1e-7, 60.1}) {
      for (int inl : {29, 30, 31}) {
        const Transform r{Quaternion::from_axis_angle(Vec3(1, 1, 0), deg * kDeg), Vec3(0, t, 0)};
        if (geometry_gate(r, inl) != (t < 3.0 && deg < 60.0 && inl > 30)) return false;
      }
    }
  }
  return true;
}

Outcome loop_closure() {
  const auto ex = drift::run_drift_experiment(FFVIO_CONFIG_DIR "/two_circle.yaml");
  const double reduction = 1.0 - ex.endpoint_after / ex.endpoint_before;

  const double lap = 2 * std::numbers::pi * 2.0;
  std::vector<double> arc = {0.0};
  for (std::size_t k = 1; k < ex.truth.size(); ++k) {
    arc.push_back(arc.back() + (ex.truth[k].translation - ex.truth[k - 1].translation).norm());
  }
  int counterparts = 0, band_misses = 0, off_band_hits = 0;
  for (std::size_t q = 0; q < ex.truth.size(); ++q) {
    if (arc[q] < lap + 0.5) continue;
    for (std::size_t c = 0; c < ex.truth.size() && arc[c] <= lap - 0.5; ++c) {
      const double phase = std::remainder(arc[q] - lap - arc[c], lap);
      const double s = similarity(ex.signatures[q], ex.signatures[c]);
      if (std::abs(phase) < 0.05) {
        ++counterparts;
        band_misses += s > 0.2 ? 0 : 1;
      } else if (std::abs(phase) > lap / 3) {
        off_band_hits += s < 0.1 ? 0 : 1;
      }
    }
  }
  const bool band = counterparts > 0 && band_misses == 0 && off_band_hits == 0;
  const bool rules = threshold_enumeration();
  return {ex.optimized && reduction > 0.5 && band && rules,
          fmt("endpoint %.3f -> %.3f m (%.0f%% less), %d loops; band %d/%d, off-band hits %d; threshold rules %s",
              ex.endpoint_before, ex.endpoint_after, 100 * reduction, ex.loops_accepted,
              counterparts - band_misses, counterparts, off_band_hits, rules ? "ok" : "broken")};
}

Outcome keyframe_boundaries() {
  std::mt19937_64 rng(8);
  int cases = 0, wrong = 0;
  auto check = [&](const Transform& last, const Transform& delta, bool expect) {
    ++cases;
    wrong += keyframe_decision(last * delta, last) == expect ? 0 : 1;
  };
  const double eps = 1e-9;
  for (int i = 0; i < 200; ++i) {
    std::normal_distribution<double> n;
    const Transform last{random_quaternion(rng), Vec3(n(rng), n(rng), n(rng))};
    const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    check(last, Transform{Quaternion{}, dir * (0.1 - eps)}, false);
    check(last, Transform{Quaternion{}, dir * (0.1 + eps)}, true);
    check(last, Transform{Quaternion::from_axis_angle(axis, 0.2 - eps), Vec3::Zero()}, false);
    check(last, Transform{Quaternion::from_axis_angle(axis, 0.2 + eps), Vec3::Zero()}, true);
    check(last, Transform{Quaternion::from_axis_angle(axis, 0.2 - eps), dir * (0.1 - eps)}, false);
    check(last, Transform{Quaternion::from_axis_angle(axis, 0.2 + eps), dir * (0.1 + eps)}, true);
  }
  // exactly on the translation threshold is not enough
  check(Transform{}, Transform{Quaternion{}, Vec3(0.1, 0, 0)}, false);
  ++cases;
  wrong += keyframe_decision(Transform{}, std::nullopt) ? 0 : 1;
  return {wrong == 0, fmt("%d/%d boundary cases", cases - wrong, cases)};
}

Outcome determinism() {
  RunConfig cfg = config("figure8.yaml");
  cfg.estimator.async = false;
  const ScenarioRun a = run_scenario(cfg);
  const ScenarioRun b = run_scenario(cfg);
  bool same = report_to_yaml(a.report) == report_to_yaml(b.report) &&
              a.output.estimate.size() == b.output.estimate.size() &&
              a.output.estimate_imu_rate.size() == b.output.estimate_imu_rate.size();
  for (std::size_t i = 0; same && i < a.output.estimate.size(); ++i) {
    same = a.output.estimate[i].pose.matrix() == b.output.estimate[i].pose.matrix();
  }
  for (std::size_t i = 0; same && i < a.output.estimate_imu_rate.size(); ++i) {
    same = a.output.estimate_imu_rate[i].pose.matrix() == b.output.estimate_imu_rate[i].pose.matrix();
  }
  return {same, fmt("%zu frame poses, %zu IMU-rate poses, report %s", a.output.estimate.size(),
                    a.output.estimate_imu_rate.size(), same ? "identical" : "differs")};
}

Outcome degradation() {
  const RunConfig with = config("blackout.yaml");
  RunConfig without = with;
  without.scenario.camera.blackouts.clear();
  const RunReport r_with = run_scenario(with).report;
  const RunReport r_without = run_scenario(without).report;
  const bool survived = !r_with.hard_failure && r_with.tracking_lost_frames > 0;
  return {survived && r_with.ate_rmse <= 2.0 * r_without.ate_rmse,
          fmt("%d lost frames; ATE %.4f vs %.4f without blackout (%.2fx)", r_with.tracking_lost_frames,
              r_with.ate_rmse, r_without.ate_rmse, r_with.ate_rmse / r_without.ate_rmse)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"AC1 noise-free round trip", round_trip},
      {"AC2 figure-8 accuracy", accuracy},
      {"AC3 bias feedback", bias_feedback},
      {"AC4 Madgwick convergence", madgwick},
      {"AC5 sliding window", sliding_window},
      {"AC6 IIR statistics", iir_statistics},
      {"AC7 loop closure", loop_closure},
      {"AC8 keyframe criteria", keyframe_boundaries},
      {"AC9 determinism", determinism},
      {"AC10 blackout degradation", degradation},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
