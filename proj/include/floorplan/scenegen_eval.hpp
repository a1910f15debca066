#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/floorplan_opt.hpp"
#include "floorplan/frame_io.hpp"
#include "floorplan/geometry.hpp"

namespace floorplan::scene {

using geometry::Point2;
using geometry::Segment2;

struct Door {
  Segment2 span;
  bool traversed{false};  ///< the trajectory must pass through it
};

/// Ground-truth scene. Walls are full-height vertical polylines, doors are
/// full-height gaps cut out of them, the camera walks the trajectory.
struct SceneSpec {
  std::vector<std::vector<Point2>> walls;
  std::vector<Door> doors;
  std::vector<Point2> trajectory;
  double sigma = 0.01;            ///< isotropic 3D point noise, meters
  double clutter_density = 0.0;   ///< expected new clutter patches per frame
  double point_density = 40.0;    ///< support points per m^2 of wall
  std::uint64_t seed = 1;

  double wall_height = 2.5;
  double camera_height = 1.2;
  double step = 0.05;             ///< meters between frames along the trajectory
  int frames = 0;                 ///< > 0 overrides step to spread this many frames
  double yaw_sweep_deg = 35.0;    ///< amplitude of the look-around oscillation
  int yaw_period = 80;            ///< frames per oscillation
  int keyframe_interval = 5;
  double min_range = 0.3;
  double max_range = 8.0;
  double floor_density_factor = 0.25;  ///< floor/ceiling density relative to walls; 0 disables
  stereo::CameraIntrinsics K{320.0, 320.0, 320.0, 180.0, 0.12};
  int width = 640;
  int height = 360;
  std::int64_t first_frame = 0;
  /// Recorded poses are expressed in this frame: p_recorded = frame_offset(p_scene).
  geometry::RigidTransform frame_offset;
};

class InvalidScene : public Error {
 public:
  using Error::Error;
};

/// Throws InvalidScene for malformed or inconsistent specs (unknown keys,
/// negative sigma, traversed doors the trajectory misses, ...).
[[nodiscard]] SceneSpec scene_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json scene_to_json(const SceneSpec& s);
void validate(const SceneSpec& s);

/// Wall segments with door spans removed, scene frame.
[[nodiscard]] std::vector<Segment2> ground_truth_walls(const SceneSpec& s);

/// Camera-to-scene poses, one per frame.
[[nodiscard]] std::vector<geometry::RigidTransform> camera_poses(const SceneSpec& s);

struct ClutterPatch {
  Segment2 base;
  double z0{0.0};
  double z1{1.0};
  std::int64_t first{0};  ///< frame index range [first, last)
  std::int64_t last{0};
};

[[nodiscard]] std::vector<ClutterPatch> clutter_patches(const SceneSpec& s);

/// Simulated stereo frames. Bit-reproducible for a fixed scene.
void generate_frames(const SceneSpec& s, const std::function<void(const stereo::FrameRecord&)>& sink);
[[nodiscard]] std::vector<stereo::FrameRecord> generate_frames(const SceneSpec& s);

/// Preset scenes used by tests, the acceptance suite and `generate --preset`.
[[nodiscard]] SceneSpec corner_scene(std::uint64_t seed);
[[nodiscard]] SceneSpec one_room_scene(std::uint64_t seed);
[[nodiscard]] SceneSpec door_room_scene(std::uint64_t seed);
[[nodiscard]] SceneSpec three_room_scene(std::uint64_t seed);
/// Corridor with four rooms. part < 0: one session over everything;
/// 0..3: a session inside room `part`; 4: a session along the corridor.
[[nodiscard]] SceneSpec five_part_scene(std::uint64_t seed, int part = -1);
/// nx by ny grid of 4 m rooms joined by doors.
[[nodiscard]] SceneSpec grid_scene(int nx, int ny, std::uint64_t seed);
[[nodiscard]] SceneSpec preset_scene(const std::string& name, std::uint64_t seed);

struct EvalReport {
  double mean{0.0};  ///< model -> ground truth, meters
  double rms{0.0};
  double max{0.0};
  std::size_t samples{0};
  double gt_mean{0.0};  ///< ground truth -> model
  double gt_rms{0.0};
  double gt_max{0.0};
  double symmetric_max{0.0};
  double coverage_tol{0.1};
  std::vector<double> per_wall_coverage;  ///< fraction of each GT wall within coverage_tol
  double coverage_deficit{0.0};           ///< 1 - length-weighted coverage
};

class EmptyModel : public Error {
 public:
  EmptyModel() : Error("floorplan has no walls to evaluate") {}
};

/// 2D Hausdorff statistics. Model samples are uniform by length and seeded;
/// ground-truth samples are evenly spaced.
[[nodiscard]] EvalReport hausdorff_eval(const std::vector<Segment2>& model,
                                        const std::vector<Segment2>& gt, std::size_t n_samples = 10000,
                                        std::uint64_t seed = 0, double coverage_tol = 0.1);

/// Evaluates against the scene's walls expressed in its recording frame.
[[nodiscard]] EvalReport hausdorff_eval(const opt::FloorplanModel& model, const SceneSpec& gt,
                                        std::size_t n_samples = 10000, std::uint64_t seed = 0,
                                        double coverage_tol = 0.1);

[[nodiscard]] nlohmann::json report_to_json(const EvalReport& r);

}  // namespace floorplan::scene
