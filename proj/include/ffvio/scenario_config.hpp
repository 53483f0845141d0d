#pragma once

#include <stdexcept>
#include <string>

#include "ffvio/backend_window.hpp"
#include "ffvio/frontend.hpp"
#include "ffvio/loop_closure.hpp"
#include "ffvio/simulator.hpp"

namespace ffvio {

/// Unreadable, malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EstimatorConfig {
  FrontendOptions frontend;
  bool sliding_window = true;
  bool loop_closure = true;
  bool async = false;
  std::size_t queue_capacity = 16;
  /// Async only: keyframes the frontend may run ahead of the backend. The
  /// simulator replays faster than real time, so without a bound the
  /// backend falls arbitrarily far behind. At 0 every keyframe is settled
  /// before the next frame, as when the backend keeps up with the camera.
  std::size_t max_keyframe_lag = 0;
  WindowOptimizeOptions window;
  LoopCloser::Options loop;
};

struct RunConfig {
  ScenarioConfig scenario;
  EstimatorConfig estimator;
};

/// Parses a YAML scenario description. Missing keys keep their defaults;
/// unknown keys are rejected. Throws ConfigError.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::string& path);

/// Sets the scenario seed and the estimator seeds derived from it.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace ffvio
