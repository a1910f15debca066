#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/floorplan_opt.hpp"
#include "floorplan/frame_io.hpp"
#include "floorplan/landmark_manager.hpp"
#include "floorplan/plane_extraction.hpp"
#include "floorplan/stereo_mesh.hpp"

namespace floorplan::pipeline {

struct EvalConfig {
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  double coverage_tol = 0.1;
};

struct PipelineConfig {
  stereo::PruneGates prune;
  extraction::ExtractionConfig extraction;
  landmarks::LandmarkConfig landmarks;
  opt::FloorplanConfig floorplan;
  EvalConfig eval;
  int cadence = 5;  ///< reconstruct every `cadence` processed frames
  int session = 0;
  bool abort_on_malformed = true;
  bool async_reconstruction = false;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// INI text with sections [stereo] [extraction] [landmarks] [floorplan]
/// [solver] [pipeline] [eval]. Unknown sections or keys and out-of-range
/// values throw ConfigError.
[[nodiscard]] PipelineConfig parse_config(const std::string& ini);
[[nodiscard]] PipelineConfig load_config(const std::string& path);
/// Every key with its current value, in parse_config's format.
[[nodiscard]] std::string config_to_ini(const PipelineConfig& cfg);

/// Wall-clock seconds per stage. `other` closes the sum to `total`.
struct StageTimings {
  double input{0.0};
  double mesh{0.0};
  double plane_extraction{0.0};
  double landmarks{0.0};
  double segment_generation{0.0};
  double segment_selection{0.0};
  double other{0.0};
  double total{0.0};
  /// Reconstruction time spent on the background worker; not part of total.
  double worker{0.0};
  std::size_t reconstructions{0};
  std::size_t max_candidates{0};
};

[[nodiscard]] nlohmann::json timings_to_json(const StageTimings& t);

/// Stereo frame to world-frame features, stage by stage.
class FrameProcessor {
 public:
  explicit FrameProcessor(const PipelineConfig& cfg) : cfg_(cfg) {}

  /// Features of one frame; points are triangulated in place.
  std::vector<landmarks::WorldFeature> process(stereo::FrameRecord& f, StageTimings* t = nullptr) const;

 private:
  const PipelineConfig& cfg_;
};

struct FloorplanEvent {
  std::int64_t frame{0};
  std::uint64_t epoch{0};
  double objective{0.0};
  std::size_t walls{0};
  bool optimal{true};
};

struct SessionResult {
  landmarks::LandmarkMap map;
  std::optional<opt::FloorplanModel> floorplan;  ///< reconstruction of the final map
  std::vector<FloorplanEvent> series;            ///< one entry per periodic reconstruction
  StageTimings timings;
  std::size_t frames{0};
  std::size_t malformed{0};
  bool budget_exceeded{false};
};

using FrameSource = std::function<std::optional<stereo::FrameRecord>()>;

/// Processes frames in order, reconstructing every `cadence` frames and once
/// more at the end if the last periodic run did not see the final map.
[[nodiscard]] SessionResult run_session(const PipelineConfig& cfg, const FrameSource& next);
[[nodiscard]] SessionResult run_session(const PipelineConfig& cfg, std::vector<stereo::FrameRecord> frames);
/// JSON-lines input. Malformed lines abort (MalformedFrame) or are counted
/// and skipped, per cfg.abort_on_malformed.
[[nodiscard]] SessionResult run_session(const PipelineConfig& cfg, std::istream& jsonl);

/// Inputs that parse but cannot be used (too few maps, bad transform entries).
class InputError : public Error {
 public:
  using Error::Error;
};

class TransformMissing : public Error {
 public:
  explicit TransformMissing(std::size_t map_index);
};

struct MergeResult {
  landmarks::LandmarkMap map;
  opt::FloorplanModel floorplan;
};

/// Folds maps[1..] into maps[0] in order; transforms[k] takes map k's world
/// frame to map 0's.
[[nodiscard]] MergeResult run_merge(const PipelineConfig& cfg, const std::vector<landmarks::LandmarkMap>& maps,
                                    const std::map<std::size_t, geometry::RigidTransform>& transforms);

/// {"transforms": [{"map": k, "q": [w, x, y, z], "t": [x, y, z]}, ...]}
[[nodiscard]] std::map<std::size_t, geometry::RigidTransform> transforms_from_json(const nlohmann::json& j);

}  // namespace floorplan::pipeline
