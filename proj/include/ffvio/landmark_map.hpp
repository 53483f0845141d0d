#pragma once

#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "ffvio/camera.hpp"

namespace ffvio {

struct Landmark {
  int id = -1;
  Vec3 position_w = Vec3::Zero();
  /// False while the position still comes from a dummy depth.
  bool has_valid_depth = false;
  int observation_count = 1;
  int last_seen_frame = -1;
};

/// A feature's pixel in camera 0 and, when stereo tracking succeeded, in
/// camera 1.
struct StereoObservation {
  int landmark_id = -1;
  Vec2 pixel_c0 = Vec2::Zero();
  std::optional<Vec2> pixel_c1;
  int frame_id = -1;
};

struct DummyDepthRange {
  double min = 0.5;
  double max = 8.0;
};

/// Result of depth recovery in the camera-0 frame.
struct DepthMeasurement {
  Vec3 point_c0 = Vec3::Zero();
  bool valid = false;
};

inline constexpr double kTriangulationGatePx = 2.0;

/// Midpoint triangulation of a stereo pair. Falls back to a point on the
/// camera-0 ray at a random depth when the pair is missing, gives a
/// non-positive depth, or reprojects worse than kTriangulationGatePx.
DepthMeasurement triangulate(const StereoObservation& obs, const CameraRig& rig,
                             std::mt19937_64& rng, const DummyDepthRange& range = {});

/// Pixel of a world landmark in camera 1 for a camera-0 pose T_w_c0; used as
/// the seed of the stereo tracker. Empty when behind camera 1.
std::optional<Vec2> reproject_guess(const Vec3& landmark_w, const Transform& T_w_c0,
                                    const CameraRig& rig);

/// coeff * previous + (1 - coeff) * measured
Vec3 iir_update(const Vec3& previous, const Vec3& measured, double coeff);

/// Frontend landmark store keyed by landmark id.
class LandmarkMap {
 public:
  struct Options {
    double iir_coeff = 0.8;
    bool use_iir = true;
  };

  LandmarkMap() = default;
  explicit LandmarkMap(const Options& options) : options_(options) {}

  const Landmark* find(int id) const;
  std::size_t size() const { return landmarks_.size(); }
  auto begin() const { return landmarks_.begin(); }
  auto end() const { return landmarks_.end(); }

  /// Creates, filters or promotes landmark `id` with a depth measurement
  /// taken from camera-0 pose T_w_c0 at `frame_id`. Filtering happens in the
  /// current camera-0 frame.
  void integrate(int frame_id, const Transform& T_w_c0, int id, const DepthMeasurement& m);

  /// Drops landmarks not seen at `frame_id` or no longer projecting inside
  /// camera 0. Returns the number removed.
  std::size_t sweep(int frame_id, const Transform& T_w_c0, const CameraRig& rig);

  /// Moves every landmark by `correction`, except those listed in `updates`,
  /// which take the given world positions.
  void apply_correction(const Transform& correction,
                        const std::vector<std::pair<int, Vec3>>& updates);

  void clear() { landmarks_.clear(); }

 private:
  std::map<int, Landmark> landmarks_;
  Options options_;
};

}  // namespace ffvio
