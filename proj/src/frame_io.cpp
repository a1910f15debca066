#include "floorplan/frame_io.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace floorplan::stereo {

MalformedFrame::MalformedFrame(std::size_t line, const std::string& what)
    : Error(line ? "malformed frame at line " + std::to_string(line) + ": " + what
                 : "malformed frame: " + what),
      line(line) {}

nlohmann::json frame_to_json(const FrameRecord& f) {
  const Eigen::Quaterniond q = f.T_wc.quaternion();
  const auto& t = f.T_wc.translation;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : f.points) {
    pts.push_back({{"u", p.u}, {"v", p.v}, {"d", p.d},
                   {"kind", p.kind == FeatureKind::kEdge ? "edge" : "corner"}});
  }
  return {{"frame", f.frame},
          {"keyframe", f.keyframe},
          {"pose", {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", {t.x(), t.y(), t.z()}}}},
          {"intrinsics",
           {{"fx", f.K.fx}, {"fy", f.K.fy}, {"cx", f.K.cx}, {"cy", f.K.cy}, {"baseline", f.K.baseline}}},
          {"points", std::move(pts)}};
}

FrameRecord frame_from_json(const nlohmann::json& j) {
  FrameRecord f;
  try {
    f.frame = j.at("frame").get<std::int64_t>();
    f.keyframe = j.at("keyframe").get<bool>();
    const auto& pose = j.at("pose");
    const auto q = pose.at("q").get<std::vector<double>>();
    const auto t = pose.at("t").get<std::vector<double>>();
    if (q.size() != 4 || t.size() != 3) throw MalformedFrame(0, "pose needs q[4] and t[3]");
    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    if (!std::isfinite(quat.norm()) || std::abs(quat.norm() - 1.0) > 1e-6) {
      throw MalformedFrame(0, "pose quaternion is not unit length");
    }
    f.T_wc = geometry::RigidTransform::from_quaternion(quat, {t[0], t[1], t[2]});
    if (!f.T_wc.valid()) throw MalformedFrame(0, "pose is not a rigid transform");

    const auto& k = j.at("intrinsics");
    f.K = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
           k.at("cy").get<double>(), k.at("baseline").get<double>()};
    if (!f.K.valid()) throw MalformedFrame(0, "intrinsics need fx, fy, baseline > 0");

    const auto& pts = j.at("points");
    f.points.reserve(pts.size());
    for (const auto& p : pts) {
      SupportPoint sp;
      sp.u = p.at("u").get<double>();
      sp.v = p.at("v").get<double>();
      sp.d = p.at("d").get<double>();
      if (!(sp.d > 0.0) || !std::isfinite(sp.u) || !std::isfinite(sp.v)) {
        throw MalformedFrame(0, "support point needs finite u, v and d > 0");
      }
      const auto kind = p.value("kind", std::string("corner"));
      if (kind == "edge") {
        sp.kind = FeatureKind::kEdge;
      } else if (kind != "corner") {
        throw MalformedFrame(0, "unknown point kind '" + kind + "'");
      }
      f.points.push_back(sp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFrame(0, e.what());
  }
  return f;
}

void write_frame(std::ostream& os, const FrameRecord& f) { os << frame_to_json(f).dump() << '\n'; }

std::optional<FrameRecord> FrameReader::next() {
  while (std::getline(is_, buf_)) {
    ++line_;
    if (buf_.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      return frame_from_json(nlohmann::json::parse(buf_));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedFrame(line_, e.what());
    } catch (const MalformedFrame& e) {
      throw MalformedFrame(line_, std::string(e.what()).substr(std::string("malformed frame: ").size()));
    }
  }
  return std::nullopt;
}

}  // namespace floorplan::stereo
