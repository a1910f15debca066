#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/geometry.hpp"
#include "floorplan/stereo_mesh.hpp"

namespace floorplan::stereo {

/// One line of a frame stream. Field names are documented in
/// schema/frame.schema.json.
struct FrameRecord {
  std::int64_t frame{0};
  bool keyframe{false};
  geometry::RigidTransform T_wc;  ///< camera to world
  CameraIntrinsics K;
  std::vector<SupportPoint> points;  ///< p3 left empty; filled by triangulation
};

class MalformedFrame : public Error {
 public:
  MalformedFrame(std::size_t line, const std::string& what);
  std::size_t line;  ///< 1-based, 0 when not read from a stream
};

[[nodiscard]] nlohmann::json frame_to_json(const FrameRecord& f);

/// Throws MalformedFrame (line 0) on missing or ill-typed fields, a pose that
/// is not a rotation, invalid intrinsics or non-positive disparities.
[[nodiscard]] FrameRecord frame_from_json(const nlohmann::json& j);

void write_frame(std::ostream& os, const FrameRecord& f);

/// Sequential reader over a JSON-lines stream; blank lines are skipped.
class FrameReader {
 public:
  explicit FrameReader(std::istream& is) : is_(is) {}

  /// Next record, or nullopt at end of stream. Throws MalformedFrame with the
  /// offending line number.
  std::optional<FrameRecord> next();

  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::istream& is_;
  std::size_t line_ = 0;
  std::string buf_;
};

}  // namespace floorplan::stereo
