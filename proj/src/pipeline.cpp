#include "ffvio/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "ffvio/bounded_queue.hpp"

namespace ffvio {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Keyframe as seen by loop closure: pose and landmark positions after the
// sliding window has refined them.
KeyframeMessage refined_keyframe(const KeyframeMessage& kf, const SlidingWindow& window) {
  KeyframeMessage out = kf;
  const WindowKeyframe& newest = window.keyframes().back();
  out.pose = newest.pose * window.rig().T_i_c0.inverse();
  for (auto& lm : out.landmarks) {
    const auto it = window.landmarks().find(lm.landmark_id);
    if (it != window.landmarks().end()) lm.position_w = it->second;
  }
  return out;
}

// Sliding-window stage shared by both modes.
struct BackendStage {
  SlidingWindow window;
  WindowOptimizeOptions options;
  int runs = 0;
  int failures = 0;

  std::optional<CorrectionMessage> process(const KeyframeMessage& kf) {
    window.insert(kf);
    if (window.size() < 2) return std::nullopt;
    ++runs;
    const WindowOptimizeResult r = optimize_window(window, options);
    if (!r.success) {
      ++failures;
      return std::nullopt;
    }
    return emit_correction(r, kf.keyframe_id);
  }
};

class FrameDriver {
 public:
  FrameDriver(const MeasurementStream& stream, PipelineOutput& out) : stream_(stream), out_(out) {}

  std::span<const ImuSample> segment_until(double t) {
    const std::size_t begin = cursor_;
    while (cursor_ < stream_.imu.size() && stream_.imu[cursor_].timestamp <= t + 1e-12) ++cursor_;
    return {stream_.imu.data() + begin, cursor_ - begin};
  }

  void record(const FrameResult& r, const NavState& state) {
    for (const auto& s : r.imu_states) out_.estimate_imu_rate.push_back(s.timestamp, s.pose());
    out_.estimate_imu_rate.push_back(state.timestamp, state.pose());
    out_.estimate.push_back(state.timestamp, state.pose());
    FrameDiagnostics d;
    d.frame_id = r.frame_id;
    d.timestamp = r.timestamp;
    d.tracking_lost = r.tracking_lost;
    d.low_confidence = r.low_confidence;
    d.correspondences = r.correspondences;
    d.inliers = r.inliers;
    d.reprojection_rms = r.reprojection_rms;
    d.map_size = r.map_size;
    d.bias = r.bias;
    d.keyframe = r.keyframe.has_value();
    out_.frames.push_back(d);
    if (d.keyframe) ++out_.keyframes;
  }

 private:
  const MeasurementStream& stream_;
  PipelineOutput& out_;
  std::size_t cursor_ = 0;
};

void finish(PipelineOutput& out, const Frontend& frontend) {
  for (const auto& [id, lm] : frontend.map()) out.final_landmarks.push_back(lm);
}

PipelineOutput run_sync(const MeasurementStream& stream, const CameraRig& rig,
                        const EstimatorConfig& config) {
  PipelineOutput out;
  Frontend frontend(rig, stream.initial_state, config.frontend);
  BackendStage backend{SlidingWindow(rig), config.window};
  LoopCloser loop(rig, config.loop);
  FrameDriver driver(stream, out);
  std::uint64_t sequence = 0;

  for (const auto& frame : stream.frames) {
    const auto imu = driver.segment_until(frame.timestamp);
    FrameResult r;
    auto t0 = Clock::now();
    try {
      r = frontend.process_frame(frame, imu);
    } catch (const HardFailure& e) {
      out.hard_failure = true;
      out.failure_message = e.what();
      break;
    }
    out.timing.frontend += seconds_since(t0);

    if (r.keyframe) {
      KeyframeMessage kf = *r.keyframe;
      if (config.sliding_window) {
        t0 = Clock::now();
        auto corr = backend.process(kf);
        if (corr) {
          corr->sequence = sequence++;
          frontend.apply_correction(*corr);
          ++out.corrections_applied;
        }
        kf = refined_keyframe(kf, backend.window);
        out.timing.backend += seconds_since(t0);
      }
      if (config.loop_closure) {
        t0 = Clock::now();
        auto corr = loop.process(kf);
        if (corr) {
          corr->sequence = sequence++;
          frontend.apply_correction(*corr);
          if (config.sliding_window) backend.window.apply_correction(corr->correction);
          ++out.corrections_applied;
        }
        out.timing.loop_closure += seconds_since(t0);
      }
    }
    driver.record(r, frontend.state());
  }

  out.window_runs = backend.runs;
  out.window_failures = backend.failures;
  out.loops_accepted = loop.accepted();
  out.loops_rejected = loop.rejected();
  out.loop_events = loop.events();
  out.similarity = loop.similarity_matrix();
  finish(out, frontend);
  return out;
}

PipelineOutput run_async(const MeasurementStream& stream, const CameraRig& rig,
                         const EstimatorConfig& config) {
  PipelineOutput out;
  Frontend frontend(rig, stream.initial_state, config.frontend);
  FrameDriver driver(stream, out);

  // Corrections flow back without blocking so no stage can wait on a full
  // queue held by a stage that is itself waiting.
  constexpr std::size_t kInboxCapacity = 1 << 16;
  BoundedQueue<KeyframeMessage> to_backend(config.queue_capacity);
  BoundedQueue<KeyframeMessage> to_loop(config.queue_capacity);
  BoundedQueue<CorrectionMessage> to_frontend(kInboxCapacity);
  BoundedQueue<Transform> loop_to_backend(kInboxCapacity);
  // Every emitted correction, indexed by sequence number.
  std::vector<CorrectionMessage> log;
  std::mutex emit_mutex;
  // Composition of the logged corrections from `first` on that pass `keep`.
  auto compose_since = [&](std::uint64_t first, auto keep) {
    Transform out;
    for (std::size_t s = first; s < log.size(); ++s) {
      if (keep(log[s])) out = log[s].correction * out;
    }
    return out;
  };
  auto emit = [&](CorrectionMessage msg) {
    std::lock_guard lock(emit_mutex);
    msg.sequence = log.size();
    log.push_back({msg.sequence, msg.reference_keyframe_id, msg.source, msg.correction, {}});
    if (msg.source == CorrectionSource::LoopClosure) loop_to_backend.push(msg.correction);
    to_frontend.push(std::move(msg));
  };

  // keyframes that have left the last enabled stage
  std::atomic<std::size_t> settled{0};
  auto settle = [&] {
    settled.fetch_add(1);
    settled.notify_all();
  };

  BackendStage backend{SlidingWindow(rig), config.window};
  double backend_time = 0.0;
  std::thread backend_thread([&] {
    while (auto kf = to_backend.pop()) {
      const auto t0 = Clock::now();
      KeyframeMessage msg = *kf;
      {
        // bring the keyframe up to the corrections the frontend had not
        // applied yet, so the window never sees the same delta twice
        std::lock_guard lock(emit_mutex);
        while (auto c = loop_to_backend.try_pop()) backend.window.apply_correction(*c);
        const Transform pending = compose_since(msg.corrections_seen, [](const auto&) { return true; });
        msg.corrections_seen = log.size();
        msg.pose = pending * msg.pose;
        for (auto& lm : msg.landmarks) lm.position_w = pending * lm.position_w;
      }
      if (config.sliding_window) {
        if (auto corr = backend.process(msg)) emit(std::move(*corr));
        msg = refined_keyframe(msg, backend.window);
      }
      backend_time += seconds_since(t0);
      if (config.loop_closure) {
        to_loop.push(std::move(msg));
      } else {
        settle();
      }
    }
    to_loop.close();
  });

  LoopCloser loop(rig, config.loop);
  double loop_time = 0.0;
  std::thread loop_thread([&] {
    while (auto kf = to_loop.pop()) {
      const auto t0 = Clock::now();
      KeyframeMessage msg = *kf;
      {
        // loop corrections the window had not seen when it refined this keyframe
        std::lock_guard lock(emit_mutex);
        const Transform missed = compose_since(
            msg.corrections_seen, [](const auto& c) { return c.source == CorrectionSource::LoopClosure; });
        msg.pose = missed * msg.pose;
        for (auto& lm : msg.landmarks) lm.position_w = missed * lm.position_w;
      }
      if (auto corr = loop.process(msg)) emit(std::move(*corr));
      loop_time += seconds_since(t0);
      settle();
    }
  });

  std::map<std::uint64_t, CorrectionMessage> pending;
  std::uint64_t next_sequence = 0;
  auto drain = [&] {
    while (auto c = to_frontend.try_pop()) pending.emplace(c->sequence, std::move(*c));
    for (auto it = pending.begin(); it != pending.end() && it->first == next_sequence;) {
      frontend.apply_correction(it->second);
      ++out.corrections_applied;
      ++next_sequence;
      it = pending.erase(it);
    }
  };

  std::size_t pushed = 0;
  for (const auto& frame : stream.frames) {
    for (std::size_t done = settled.load(); pushed > done + config.max_keyframe_lag; done = settled.load()) {
      settled.wait(done);
    }
    drain();
    const auto imu = driver.segment_until(frame.timestamp);
    const auto t0 = Clock::now();
    FrameResult r;
    try {
      r = frontend.process_frame(frame, imu);
    } catch (const HardFailure& e) {
      out.hard_failure = true;
      out.failure_message = e.what();
      break;
    }
    out.timing.frontend += seconds_since(t0);
    if (r.keyframe && (config.sliding_window || config.loop_closure)) {
      to_backend.push(*r.keyframe);
      ++pushed;
    }
    driver.record(r, frontend.state());
  }
  to_backend.close();
  backend_thread.join();
  loop_thread.join();
  if (!out.hard_failure) drain();

  out.timing.backend = backend_time;
  out.timing.loop_closure = loop_time;
  out.window_runs = backend.runs;
  out.window_failures = backend.failures;
  out.loops_accepted = loop.accepted();
  out.loops_rejected = loop.rejected();
  out.loop_events = loop.events();
  out.similarity = loop.similarity_matrix();
  finish(out, frontend);
  return out;
}

}  // namespace

PipelineOutput run_pipeline(const MeasurementStream& stream, const CameraRig& rig,
                            const EstimatorConfig& config) {
  return config.async ? run_async(stream, rig, config) : run_sync(stream, rig, config);
}

}  // namespace ffvio
