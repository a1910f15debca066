#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/geometry.hpp"

namespace floorplan::landmarks {

using geometry::PlaneCartesian;
using geometry::Point3;
using geometry::RigidTransform;

enum class LandmarkState { kInvalid, kValid };

/// Frame identity across sessions: session in the high 32 bits.
using FrameKey = std::uint64_t;

inline FrameKey frame_key(int session, std::int64_t frame) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(session)) << 32) |
         static_cast<std::uint32_t>(frame);
}

struct Observation {
  FrameKey frame;
  bool keyframe;
  double residual;  ///< distance of the feature's support centroid to the landmark plane
};

struct PlaneLandmark {
  int id{0};
  PlaneCartesian plane;              ///< world frame, canonical sign
  std::vector<Point3> support;       ///< world frame
  int frames_observed{0};
  std::set<FrameKey> keyframes_observed;
  LandmarkState state = LandmarkState::kInvalid;
  std::vector<Observation> observations;
};

/// Camera-to-world pose of one processed frame.
struct TrajectoryPose {
  int session{0};
  std::int64_t frame{0};
  bool keyframe{false};
  RigidTransform T_wc;
};

/// A plane feature already expressed in the world frame.
struct WorldFeature {
  PlaneCartesian plane;
  std::vector<Point3> support;
};

struct LandmarkConfig {
  double theta_m_deg = 5.0;
  double d_m = 0.02;  ///< meters
  int promote_frames = 30;     ///< promotion needs strictly more frames than this
  int promote_keyframes = 3;   ///< and strictly more keyframes than this
  std::size_t max_support = 5000;
  int ransac_iterations = 200;
  double dist_gate = 0.02;
  double theta_i = 0.75;
  double prune_gate = 0.0;  ///< observation residual gate; <= 0 disables pruning
  std::uint64_t seed = 0;
};

class UnknownLandmark : public Error {
 public:
  explicit UnknownLandmark(int id);
};

class PreconditionNotMet : public Error {
 public:
  using Error::Error;
};

class SchemaVersionMismatch : public Error {
 public:
  using Error::Error;
};

inline constexpr int kMapSchemaVersion = 1;

/// Immutable view handed to the reconstruction side.
struct MapSnapshot {
  std::vector<PlaneLandmark> landmarks;  ///< Valid landmarks only, ascending id
  std::vector<TrajectoryPose> trajectory;
  std::uint64_t epoch{0};
};

class LandmarkMap {
 public:
  explicit LandmarkMap(LandmarkConfig cfg = {}, int session = 0);

  [[nodiscard]] const LandmarkConfig& config() const { return cfg_; }
  [[nodiscard]] int session() const { return session_; }
  [[nodiscard]] const std::map<int, PlaneLandmark>& landmarks() const { return landmarks_; }
  [[nodiscard]] const std::vector<TrajectoryPose>& trajectory() const { return trajectory_; }
  [[nodiscard]] const PlaneLandmark& landmark(int id) const;
  [[nodiscard]] std::size_t valid_count() const;
  [[nodiscard]] int next_id() const { return next_id_; }
  [[nodiscard]] std::uint64_t epoch() const { return epoch_; }

  /// Landmark with the smallest normal angle among those within theta_m whose
  /// plane comes within d_m of some feature support point.
  [[nodiscard]] std::optional<int> match(const PlaneCartesian& plane,
                                         std::span<const Point3> support) const;

  /// Feeds one feature of a frame. Returns the landmark it updated or created,
  /// or nullopt for an unmatched non-keyframe feature.
  std::optional<int> observe(const WorldFeature& f, std::int64_t frame, bool keyframe);

  void add_pose(const TrajectoryPose& pose) { trajectory_.push_back(pose); }

  /// Invalid when observed by at most one keyframe. Throws UnknownLandmark.
  void demote(int id);

  /// Drops observations whose residual exceeds the configured gate, then
  /// re-evaluates demotion. Returns the number of observations dropped.
  int prune_observations();

  /// Absorbs the landmark with fewer keyframes (ties: larger id) into the
  /// other. Throws PreconditionNotMet or UnknownLandmark. Returns the winner.
  int merge_landmarks(int a, int b);

  /// Same as merge_landmarks but with the winner fixed.
  void absorb(int winner, int loser);

  [[nodiscard]] bool mergeable(const PlaneLandmark& a, const PlaneLandmark& b) const;

  /// Merges until no pair satisfies the precondition. Returns merges done.
  int merge_pass();

  [[nodiscard]] std::shared_ptr<const MapSnapshot> snapshot();

  /// Support points dropped as RANSAC outliers over the map's lifetime.
  [[nodiscard]] std::size_t outliers_removed() const { return outliers_removed_; }

  /// Rebuilds a map from serialized parts.
  static LandmarkMap restore(LandmarkConfig cfg, int session, std::map<int, PlaneLandmark> lms,
                             std::vector<TrajectoryPose> trajectory, int next_id,
                             std::uint64_t epoch);

  /// Inserts a landmark under a fresh id and returns that id.
  int insert(PlaneLandmark lm);

 private:
  void refit(PlaneLandmark& lm, std::size_t previous_count);
  void cap_support(PlaneLandmark& lm);
  void update_state(PlaneLandmark& lm) const;
  [[nodiscard]] double min_distance(std::span<const Point3> pts, const PlaneCartesian& pl) const;

  LandmarkConfig cfg_;
  int session_;
  std::map<int, PlaneLandmark> landmarks_;
  std::vector<TrajectoryPose> trajectory_;
  int next_id_ = 0;
  std::uint64_t epoch_ = 0;
  std::size_t outliers_removed_ = 0;
};

/// Brings `current` into the frame of `matching` through T_cm and folds it in.
/// Duplicates are absorbed into the matching-map landmark; exact duplicate
/// support points are not repeated.
[[nodiscard]] LandmarkMap merge_maps(const LandmarkMap& current, const LandmarkMap& matching,
                                     const RigidTransform& T_cm);

[[nodiscard]] nlohmann::json map_to_json(const LandmarkMap& map);

/// Throws SchemaVersionMismatch for a different schema_version.
[[nodiscard]] LandmarkMap map_from_json(const nlohmann::json& j, const LandmarkConfig& cfg);

}  // namespace floorplan::landmarks
