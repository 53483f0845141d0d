#include "ffvio/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ffvio/trajectory_io.hpp"

namespace ffvio {

AteResult evaluate_ate(const Trajectory& est, const Trajectory& gt, double tolerance) {
  const auto pairs = associate(est, gt, tolerance);
  if (pairs.size() < 3) throw AlignmentError("ate: fewer than three associated poses");
  std::vector<Vec3> e;
  std::vector<Vec3> g;
  for (const auto& [i, j] : pairs) {
    e.push_back(est[i].pose.translation);
    g.push_back(gt[j].pose.translation);
  }
  AteResult r;
  r.pairs = pairs.size();
  try {
    r.alignment = umeyama_align(e, g);
  } catch (const AlignmentError&) {
    // static or straight-line positions: the rotation is not determined
    Vec3 offset = Vec3::Zero();
    for (std::size_t k = 0; k < e.size(); ++k) offset += g[k] - e[k];
    r.alignment = Transform{Quaternion::identity(), offset / static_cast<double>(e.size())};
    r.rigid = false;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double err = (r.alignment * e[k] - g[k]).norm();
    r.errors.push_back(err);
    sq += err * err;
  }
  r.rmse = std::sqrt(sq / static_cast<double>(e.size()));
  return r;
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, double tolerance) {
  return evaluate_ate(est, gt, tolerance).rmse;
}

const std::vector<std::string>& loop_names() {
  static const std::vector<std::string> names = {"madgwick",       "feedforward", "bias-feedback",
                                                 "iir",            "sliding-window", "loop-closure"};
  return names;
}

namespace {

bool* loop_flag(EstimatorConfig& cfg, const std::string& name) {
  if (name == "madgwick") return &cfg.frontend.madgwick;
  if (name == "feedforward") return &cfg.frontend.feedforward;
  if (name == "bias-feedback") return &cfg.frontend.bias_feedback;
  if (name == "iir") return &cfg.frontend.iir;
  if (name == "sliding-window") return &cfg.sliding_window;
  if (name == "loop-closure") return &cfg.loop_closure;
  return nullptr;
}

void emit_vec3(YAML::Emitter& y, const Vec3& v) {
  y << YAML::Flow << YAML::BeginSeq << v.x() << v.y() << v.z() << YAML::EndSeq;
}

void emit_bias(YAML::Emitter& y, const ImuBias& b) {
  y << YAML::BeginMap;
  y << YAML::Key << "gyro" << YAML::Value;
  emit_vec3(y, b.gyro);
  y << YAML::Key << "accel" << YAML::Value;
  emit_vec3(y, b.accel);
  y << YAML::EndMap;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void set_loop(EstimatorConfig& cfg, const std::string& name, bool enabled) {
  bool* flag = loop_flag(cfg, name);
  if (!flag) throw ConfigError("unknown feedback loop '" + name + "'");
  *flag = enabled;
}

bool loop_enabled(const EstimatorConfig& cfg, const std::string& name) {
  EstimatorConfig copy = cfg;
  bool* flag = loop_flag(copy, name);
  if (!flag) throw ConfigError("unknown feedback loop '" + name + "'");
  return *flag;
}

std::string report_to_yaml(const RunReport& r) {
  YAML::Emitter y;
  y.SetDoublePrecision(12);
  y << YAML::BeginMap;
  y << YAML::Key << "scenario" << YAML::Value << r.scenario;
  y << YAML::Key << "seed" << YAML::Value << r.seed;
  y << YAML::Key << "mode" << YAML::Value << r.mode;
  y << YAML::Key << "loops" << YAML::Value << YAML::BeginMap;
  for (const auto& name : loop_names()) {
    const auto it = r.loops.find(name);
    y << YAML::Key << name << YAML::Value << (it != r.loops.end() && it->second);
  }
  y << YAML::EndMap;
  y << YAML::Key << "hard_failure" << YAML::Value << r.hard_failure;
  if (r.hard_failure) y << YAML::Key << "failure_message" << YAML::Value << r.failure_message;
  y << YAML::Key << "ate_rmse" << YAML::Value << r.ate_rmse;
  y << YAML::Key << "ate_rmse_imu_rate" << YAML::Value << r.ate_rmse_imu_rate;
  y << YAML::Key << "trajectory_length" << YAML::Value << r.trajectory_length;
  y << YAML::Key << "ate_over_length" << YAML::Value << r.ate_over_length;
  y << YAML::Key << "frames" << YAML::Value << r.frames;
  y << YAML::Key << "tracking_lost_frames" << YAML::Value << r.tracking_lost_frames;
  y << YAML::Key << "low_confidence_frames" << YAML::Value << r.low_confidence_frames;
  y << YAML::Key << "keyframes" << YAML::Value << r.keyframes;
  y << YAML::Key << "inliers" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "mean" << YAML::Value << r.mean_inliers;
  y << YAML::Key << "min" << YAML::Value << r.min_inliers;
  y << YAML::Key << "mean_reprojection_rms_px" << YAML::Value << r.mean_reprojection_rms;
  y << YAML::EndMap;
  y << YAML::Key << "sliding_window" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "runs" << YAML::Value << r.window_runs;
  y << YAML::Key << "failures" << YAML::Value << r.window_failures;
  y << YAML::EndMap;
  y << YAML::Key << "corrections_applied" << YAML::Value << r.corrections_applied;
  y << YAML::Key << "loop_closures" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "accepted" << YAML::Value << r.loops_accepted;
  y << YAML::Key << "rejected" << YAML::Value << r.loops_rejected;
  y << YAML::EndMap;
  y << YAML::Key << "final_bias_estimate" << YAML::Value;
  emit_bias(y, r.final_bias);
  y << YAML::Key << "final_bias_truth" << YAML::Value;
  emit_bias(y, r.true_final_bias);
  y << YAML::Key << "series" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "frame_errors" << YAML::Value << "errors.csv";
  y << YAML::Key << "bias_trace" << YAML::Value << "bias.csv";
  y << YAML::EndMap;
  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

std::string timing_to_yaml(const StageTimes& t) {
  YAML::Emitter y;
  y << YAML::BeginMap;
  y << YAML::Key << "frontend_s" << YAML::Value << t.frontend;
  y << YAML::Key << "backend_s" << YAML::Value << t.backend;
  y << YAML::Key << "loop_closure_s" << YAML::Value << t.loop_closure;
  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

ScenarioRun run_scenario(const RunConfig& cfg) {
  ScenarioRun run;
  run.stream = generate(cfg.scenario);
  run.output = run_pipeline(run.stream, cfg.scenario.rig, cfg.estimator);
  const PipelineOutput& out = run.output;

  RunReport& r = run.report;
  r.scenario = cfg.scenario.name;
  r.seed = cfg.scenario.seed;
  r.mode = cfg.estimator.async ? "async" : "sync";
  for (const auto& name : loop_names()) r.loops[name] = loop_enabled(cfg.estimator, name);
  r.hard_failure = out.hard_failure;
  r.failure_message = out.failure_message;
  r.trajectory_length = run.stream.ground_truth.path_length();
  if (out.estimate.size() >= 3) {
    const AteResult ate = evaluate_ate(out.estimate, run.stream.ground_truth);
    r.ate_rmse = ate.rmse;
    r.frame_errors = ate.errors;
    r.ate_rmse_imu_rate = ate_rmse(out.estimate_imu_rate, run.stream.ground_truth_imu);
  } else {
    r.ate_rmse = std::numeric_limits<double>::quiet_NaN();
    r.ate_rmse_imu_rate = r.ate_rmse;
  }
  r.ate_over_length = r.trajectory_length > 0.0 ? r.ate_rmse / r.trajectory_length : 0.0;
  r.frames = static_cast<int>(out.frames.size());
  double inl = 0.0;
  double rms = 0.0;
  int tracked = 0;
  r.min_inliers = std::numeric_limits<int>::max();
  for (const auto& d : out.frames) {
    r.tracking_lost_frames += d.tracking_lost ? 1 : 0;
    r.low_confidence_frames += d.low_confidence ? 1 : 0;
    r.bias_trace.emplace_back(d.timestamp, d.bias);
    if (d.tracking_lost || d.frame_id == 0) continue;
    ++tracked;
    inl += d.inliers;
    rms += d.reprojection_rms;
    r.min_inliers = std::min(r.min_inliers, d.inliers);
  }
  if (tracked == 0) r.min_inliers = 0;
  r.mean_inliers = tracked ? inl / tracked : 0.0;
  r.mean_reprojection_rms = tracked ? rms / tracked : 0.0;
  r.keyframes = out.keyframes;
  r.window_runs = out.window_runs;
  r.window_failures = out.window_failures;
  r.corrections_applied = out.corrections_applied;
  r.loops_accepted = out.loops_accepted;
  r.loops_rejected = out.loops_rejected;
  if (!out.frames.empty()) r.final_bias = out.frames.back().bias;
  if (!run.stream.true_bias.empty()) r.true_final_bias = run.stream.true_bias.back();
  r.timing = out.timing;
  return run;
}

void write_outputs(const std::filesystem::path& dir, const ScenarioRun& run) {
  std::filesystem::create_directories(dir);
  const PipelineOutput& out = run.output;
  const MeasurementStream& s = run.stream;
  write_tum(dir / "trajectory_est.tum", out.estimate);
  write_tum(dir / "trajectory_gt.tum", s.ground_truth);
  write_tum(dir / "trajectory_est_imu.tum", out.estimate_imu_rate);
  write_tum(dir / "trajectory_gt_imu.tum", s.ground_truth_imu);
  std::ofstream(dir / "report.yaml") << report_to_yaml(run.report);
  std::ofstream(dir / "timing.yaml") << timing_to_yaml(run.report.timing);

  {
    std::ofstream f(dir / "imu.csv");
    f << "timestamp,ax,ay,az,gx,gy,gz\n";
    for (const auto& m : s.imu) {
      f << fmt(m.timestamp) << ',' << fmt(m.accel.x()) << ',' << fmt(m.accel.y()) << ','
        << fmt(m.accel.z()) << ',' << fmt(m.gyro.x()) << ',' << fmt(m.gyro.y()) << ','
        << fmt(m.gyro.z()) << '\n';
    }
  }
  {
    std::ofstream f(dir / "observations.csv");
    f << "frame_id,landmark_id,u0,v0,u1,v1\n";
    for (const auto& fr : s.frames) {
      for (const auto& o : fr.observations) {
        f << fr.frame_id << ',' << o.landmark_id << ',' << fmt(o.pixel_c0.x()) << ','
          << fmt(o.pixel_c0.y()) << ',';
        if (o.pixel_c1) {
          f << fmt(o.pixel_c1->x()) << ',' << fmt(o.pixel_c1->y()) << '\n';
        } else {
          f << "NaN,NaN\n";
        }
      }
    }
  }
  auto write_bias = [](std::ofstream& f, double t, const ImuBias& b) {
    f << fmt(t) << ',' << fmt(b.gyro.x()) << ',' << fmt(b.gyro.y()) << ',' << fmt(b.gyro.z()) << ','
      << fmt(b.accel.x()) << ',' << fmt(b.accel.y()) << ',' << fmt(b.accel.z()) << '\n';
  };
  {
    std::ofstream f(dir / "bias.csv");
    f << "timestamp,bgx,bgy,bgz,bax,bay,baz\n";
    for (const auto& [t, b] : run.report.bias_trace) write_bias(f, t, b);
  }
  {
    std::ofstream f(dir / "bias_truth.csv");
    f << "timestamp,bgx,bgy,bgz,bax,bay,baz\n";
    for (std::size_t k = 0; k < s.true_bias.size(); ++k) write_bias(f, s.imu[k].timestamp, s.true_bias[k]);
  }
  {
    std::ofstream f(dir / "landmarks.csv");
    f << "id,x,y,z,observations\n";
    for (const auto& lm : out.final_landmarks) {
      f << lm.id << ',' << fmt(lm.position_w.x()) << ',' << fmt(lm.position_w.y()) << ','
        << fmt(lm.position_w.z()) << ',' << lm.observation_count << '\n';
    }
  }
  {
    std::ofstream f(dir / "similarity.csv");
    for (const auto& row : out.similarity) {
      for (std::size_t j = 0; j < row.size(); ++j) f << (j ? "," : "") << fmt(row[j]);
      f << '\n';
    }
  }
  {
    std::ofstream f(dir / "diagnostics.csv");
    f << "frame_id,timestamp,tracking_lost,low_confidence,correspondences,inliers,"
         "reprojection_rms,map_size,keyframe\n";
    for (const auto& d : out.frames) {
      f << d.frame_id << ',' << fmt(d.timestamp) << ',' << d.tracking_lost << ',' << d.low_confidence
        << ',' << d.correspondences << ',' << d.inliers << ',' << fmt(d.reprojection_rms) << ','
        << d.map_size << ',' << d.keyframe << '\n';
    }
  }
  {
    std::ofstream f(dir / "errors.csv");
    f << "timestamp,error\n";
    const std::size_t n = std::min(run.report.frame_errors.size(), out.estimate.size());
    for (std::size_t k = 0; k < n; ++k) {
      f << fmt(out.estimate[k].timestamp) << ',' << fmt(run.report.frame_errors[k]) << '\n';
    }
  }
}

std::vector<AblationRow> ablation_matrix(const RunConfig& cfg, std::vector<std::string> loops) {
  if (loops.empty()) loops = loop_names();
  for (const auto& name : loops) {
    EstimatorConfig probe = cfg.estimator;
    set_loop(probe, name, true);
  }
  if (loops.size() > 16) throw ConfigError("ablation over too many loops");
  std::vector<AblationRow> rows;
  const std::size_t combos = std::size_t{1} << loops.size();
  // the all-on combination comes first, the all-off one last
  for (std::size_t mask = combos; mask-- > 0;) {
    RunConfig run_cfg = cfg;
    for (std::size_t k = 0; k < loops.size(); ++k) {
      set_loop(run_cfg.estimator, loops[k], ((mask >> (loops.size() - 1 - k)) & 1U) != 0);
    }
    AblationRow row;
    for (const auto& name : loop_names()) row.loops[name] = loop_enabled(run_cfg.estimator, name);
    row.report = run_scenario(run_cfg).report;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream ss;
  for (const auto& name : loop_names()) ss << name << ',';
  ss << "ate_rmse,ate_rmse_imu_rate,ate_over_length,hard_failure,loops_accepted\n";
  for (const auto& row : rows) {
    for (const auto& name : loop_names()) ss << (row.loops.at(name) ? 1 : 0) << ',';
    ss << fmt(row.report.ate_rmse) << ',' << fmt(row.report.ate_rmse_imu_rate) << ','
       << fmt(row.report.ate_over_length) << ',' << (row.report.hard_failure ? 1 : 0) << ','
       << row.report.loops_accepted << '\n';
  }
  return ss.str();
}

}  // namespace ffvio
