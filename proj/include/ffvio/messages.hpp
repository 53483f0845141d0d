#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ffvio/geometry.hpp"

namespace ffvio {

struct KeyframeLandmark {
  int landmark_id = -1;
  Vec3 position_w = Vec3::Zero();
  Vec2 pixel_c0 = Vec2::Zero();
  std::optional<Vec2> pixel_c1;
};

/// Snapshot of a frame handed from the frontend to the backend. `pose` is
/// the body pose T_w_i.
struct KeyframeMessage {
  int keyframe_id = -1;
  int frame_id = -1;
  double timestamp = 0.0;
  Transform pose;
  std::vector<KeyframeLandmark> landmarks;
  /// Corrections the frontend had applied when it made this keyframe.
  std::uint64_t corrections_seen = 0;
};

enum class CorrectionSource { SlidingWindow, LoopClosure };

/// World-frame correction: the receiver left-multiplies its poses by
/// `correction`. Listed landmarks take the given positions; the others move
/// with the correction.
struct CorrectionMessage {
  std::uint64_t sequence = 0;
  int reference_keyframe_id = -1;
  CorrectionSource source = CorrectionSource::SlidingWindow;
  Transform correction;
  std::vector<std::pair<int, Vec3>> landmark_updates;
};

}  // namespace ffvio
