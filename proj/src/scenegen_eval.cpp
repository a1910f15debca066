#include "floorplan/scenegen_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <set>

namespace floorplan::scene {

using geometry::deg2rad;
using geometry::kPi;
using geometry::Point3;
using geometry::point_segment_distance;
using geometry::RigidTransform;
using geometry::Vec2;
using geometry::Vec3;

namespace {

nlohmann::json pt(const Point2& p) { return nlohmann::json::array({p.x(), p.y()}); }

Point2 read_pt(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidScene("expected a point [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

double polyline_length(const std::vector<Point2>& line) {
  double len = 0.0;
  for (std::size_t k = 1; k < line.size(); ++k) len += (line[k] - line[k - 1]).norm();
  return len;
}

// Point at arc length s, and the segment index it falls on.
std::pair<Point2, std::size_t> point_at(const std::vector<Point2>& line, double s) {
  for (std::size_t k = 1; k < line.size(); ++k) {
    const double len = (line[k] - line[k - 1]).norm();
    if (s <= len || k + 1 == line.size()) {
      const double t = len > 0.0 ? std::clamp(s / len, 0.0, 1.0) : 0.0;
      return {line[k - 1] + t * (line[k] - line[k - 1]), k - 1};
    }
    s -= len;
  }
  return {line.front(), 0};
}

// Parameter interval of s inside the disc (c, r), clipped to [0, 1].
std::optional<std::pair<double, double>> disc_interval(const Segment2& s, const Point2& c, double r) {
  const Vec2 d = s.b - s.a;
  const Vec2 f = s.a - c;
  const double a = d.squaredNorm();
  const double b = 2.0 * f.dot(d);
  const double cc = f.squaredNorm() - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (a <= 0.0 || disc <= 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = std::max(0.0, (-b - sq) / (2.0 * a));
  const double t1 = std::min(1.0, (-b + sq) / (2.0 * a));
  if (t1 <= t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

struct Surface {
  Segment2 base;
  double z0, z1;
};

constexpr std::uint64_t kClutterStream = 0x5c1d77e7ULL;

std::string unknown_key(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const char* what) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) return std::string("unknown ") + what + " key '" + k + "'";
  }
  return {};
}

}  // namespace

void validate(const SceneSpec& s) {
  if (s.walls.empty()) throw InvalidScene("scene has no walls");
  for (const auto& w : s.walls) {
    if (w.size() < 2) throw InvalidScene("wall polyline needs at least two points");
  }
  if (s.trajectory.empty()) throw InvalidScene("scene has no trajectory");
  if (!(s.sigma >= 0.0)) throw InvalidScene("sigma must be >= 0");
  if (!(s.clutter_density >= 0.0)) throw InvalidScene("clutter_density must be >= 0");
  if (!(s.point_density > 0.0)) throw InvalidScene("point_density must be > 0");
  if (!(s.wall_height > 0.0) || s.camera_height <= 0.0 || s.camera_height >= s.wall_height) {
    throw InvalidScene("camera must sit between floor and ceiling");
  }
  if (s.frames <= 0 && !(s.step > 0.0)) throw InvalidScene("step must be > 0");
  if (s.keyframe_interval < 1 || s.yaw_period < 1) throw InvalidScene("intervals must be >= 1");
  if (!s.K.valid() || s.width < 1 || s.height < 1) throw InvalidScene("invalid camera");
  if (!(s.min_range > 0.0) || s.max_range <= s.min_range) throw InvalidScene("invalid range");
  if (!s.frame_offset.valid()) throw InvalidScene("frame_offset is not a rigid transform");
  for (const auto& d : s.doors) {
    bool on_wall = false;
    for (const auto& w : s.walls) {
      for (std::size_t k = 1; k < w.size() && !on_wall; ++k) {
        const Segment2 e{w[k - 1], w[k]};
        on_wall = point_segment_distance(d.span.a, e) <= 1e-6 && point_segment_distance(d.span.b, e) <= 1e-6;
      }
    }
    if (!on_wall) throw InvalidScene("door does not lie on a wall segment");
    if (!d.traversed) continue;
    bool crossed = false;
    for (std::size_t k = 1; k < s.trajectory.size() && !crossed; ++k) {
      crossed = geometry::segments_touch(d.span, {s.trajectory[k - 1], s.trajectory[k]});
    }
    if (!crossed) throw InvalidScene("trajectory misses a traversed door");
  }
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{
      "walls", "doors", "trajectory", "sigma", "clutter_density", "point_density", "seed",
      "wall_height", "camera_height", "step", "frames", "yaw_sweep_deg", "yaw_period",
      "keyframe_interval", "min_range", "max_range", "floor_density_factor", "intrinsics", "image",
      "first_frame", "frame_offset"};
  SceneSpec s;
  try {
    if (!j.is_object()) throw InvalidScene("scene must be a JSON object");
    if (auto msg = unknown_key(j, keys, "scene"); !msg.empty()) throw InvalidScene(msg);
    for (const auto& w : j.at("walls")) {
      std::vector<Point2> line;
      for (const auto& p : w) line.push_back(read_pt(p));
      s.walls.push_back(std::move(line));
    }
    if (j.contains("doors")) {
      for (const auto& d : j["doors"]) {
        if (auto msg = unknown_key(d, {"span", "traversed"}, "door"); !msg.empty()) throw InvalidScene(msg);
        const auto& sp = d.at("span");
        s.doors.push_back({{read_pt(sp.at(0)), read_pt(sp.at(1))}, d.value("traversed", false)});
      }
    }
    for (const auto& p : j.at("trajectory")) s.trajectory.push_back(read_pt(p));
    s.sigma = j.value("sigma", s.sigma);
    s.clutter_density = j.value("clutter_density", s.clutter_density);
    s.point_density = j.value("point_density", s.point_density);
    s.seed = j.value("seed", s.seed);
    s.wall_height = j.value("wall_height", s.wall_height);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.step = j.value("step", s.step);
    s.frames = j.value("frames", s.frames);
    s.yaw_sweep_deg = j.value("yaw_sweep_deg", s.yaw_sweep_deg);
    s.yaw_period = j.value("yaw_period", s.yaw_period);
    s.keyframe_interval = j.value("keyframe_interval", s.keyframe_interval);
    s.min_range = j.value("min_range", s.min_range);
    s.max_range = j.value("max_range", s.max_range);
    s.floor_density_factor = j.value("floor_density_factor", s.floor_density_factor);
    s.first_frame = j.value("first_frame", s.first_frame);
    if (j.contains("intrinsics")) {
      const auto& k = j["intrinsics"];
      s.K = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
             k.at("cy").get<double>(), k.at("baseline").get<double>()};
    }
    if (j.contains("image")) {
      s.width = j["image"].at(0).get<int>();
      s.height = j["image"].at(1).get<int>();
    }
    if (j.contains("frame_offset")) {
      const auto& o = j["frame_offset"];
      const auto t = o.value("t", std::vector<double>{0.0, 0.0, 0.0});
      if (t.size() != 3) throw InvalidScene("frame_offset.t needs 3 values");
      s.frame_offset = RigidTransform::yaw(deg2rad(o.value("yaw_deg", 0.0)), {t[0], t[1], t[2]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene(std::string("scene: ") + e.what());
  }
  validate(s);
  return s;
}

nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["walls"] = nlohmann::json::array();
  for (const auto& w : s.walls) {
    nlohmann::json line = nlohmann::json::array();
    for (const auto& p : w) line.push_back(pt(p));
    j["walls"].push_back(std::move(line));
  }
  j["doors"] = nlohmann::json::array();
  for (const auto& d : s.doors) {
    j["doors"].push_back({{"span", {pt(d.span.a), pt(d.span.b)}}, {"traversed", d.traversed}});
  }
  j["trajectory"] = nlohmann::json::array();
  for (const auto& p : s.trajectory) j["trajectory"].push_back(pt(p));
  j["sigma"] = s.sigma;
  j["clutter_density"] = s.clutter_density;
  j["point_density"] = s.point_density;
  j["seed"] = s.seed;
  j["wall_height"] = s.wall_height;
  j["camera_height"] = s.camera_height;
  j["step"] = s.step;
  j["frames"] = s.frames;
  j["yaw_sweep_deg"] = s.yaw_sweep_deg;
  j["yaw_period"] = s.yaw_period;
  j["keyframe_interval"] = s.keyframe_interval;
  j["min_range"] = s.min_range;
  j["max_range"] = s.max_range;
  j["floor_density_factor"] = s.floor_density_factor;
  j["intrinsics"] = {{"fx", s.K.fx}, {"fy", s.K.fy}, {"cx", s.K.cx}, {"cy", s.K.cy}, {"baseline", s.K.baseline}};
  j["image"] = {s.width, s.height};
  j["first_frame"] = s.first_frame;
  const auto& R = s.frame_offset.rotation;
  const auto& t = s.frame_offset.translation;
  j["frame_offset"] = {{"yaw_deg", geometry::rad2deg(std::atan2(R(1, 0), R(0, 0)))}, {"t", {t.x(), t.y(), t.z()}}};
  return j;
}

std::vector<Segment2> ground_truth_walls(const SceneSpec& s) {
  std::vector<Segment2> out;
  for (const auto& w : s.walls) {
    for (std::size_t k = 1; k < w.size(); ++k) {
      const Segment2 e{w[k - 1], w[k]};
      if (e.length() <= 0.0) continue;
      std::vector<std::pair<double, double>> cuts;
      for (const auto& d : s.doors) {
        if (point_segment_distance(d.span.a, e) > 1e-6 || point_segment_distance(d.span.b, e) > 1e-6) continue;
        auto ta = geometry::project_param(d.span.a, e);
        auto tb = geometry::project_param(d.span.b, e);
        if (ta > tb) std::swap(ta, tb);
        cuts.emplace_back(ta, tb);
      }
      std::sort(cuts.begin(), cuts.end());
      double from = 0.0;
      for (const auto& [ta, tb] : cuts) {
        if (ta > from) out.push_back({e.at(from), e.at(ta)});
        from = std::max(from, tb);
      }
      if (from < 1.0) out.push_back({e.at(from), e.b});
    }
  }
  std::erase_if(out, [](const Segment2& seg) { return seg.length() <= 1e-9; });
  return out;
}

std::vector<RigidTransform> camera_poses(const SceneSpec& s) {
  const auto& line = s.trajectory;
  const double len = polyline_length(line);
  std::vector<double> at;
  if (s.frames > 0) {
    for (int k = 0; k < s.frames; ++k) at.push_back(s.frames > 1 ? len * k / (s.frames - 1) : 0.0);
  } else {
    for (int k = 0; k * s.step <= len + 1e-9; ++k) at.push_back(k * s.step);
  }
  std::vector<RigidTransform> out;
  for (std::size_t k = 0; k < at.size(); ++k) {
    const auto [p, seg] = point_at(line, at[k]);
    // Heading from a half-metre look-behind/look-ahead window smooths the turns.
    Vec2 dir = point_at(line, std::min(len, at[k] + 0.5)).first - point_at(line, std::max(0.0, at[k] - 0.5)).first;
    if (dir.norm() < 1e-6 && line.size() > 1) dir = line[std::min(seg + 1, line.size() - 1)] - line[seg];
    const double heading = dir.norm() < 1e-9 ? 0.0 : std::atan2(dir.y(), dir.x());
    const double yaw =
        heading + deg2rad(s.yaw_sweep_deg) * std::sin(2.0 * kPi * static_cast<double>(k) / s.yaw_period);
    RigidTransform T;
    T.rotation.col(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0.0);
    T.rotation.col(1) = Vec3(0.0, 0.0, -1.0);
    T.rotation.col(2) = Vec3(std::cos(yaw), std::sin(yaw), 0.0);
    T.translation = Vec3(p.x(), p.y(), s.camera_height);
    out.push_back(T);
  }
  return out;
}

std::vector<ClutterPatch> clutter_patches(const SceneSpec& s) {
  std::vector<ClutterPatch> out;
  if (s.clutter_density <= 0.0) return out;
  const auto poses = camera_poses(s);
  const auto walls = ground_truth_walls(s);
  const auto frames = static_cast<std::int64_t>(poses.size());
  std::mt19937_64 rng(s.seed ^ kClutterStream);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int count = std::poisson_distribution<int>(s.clutter_density * static_cast<double>(frames))(rng);
  for (int c = 0; c < count; ++c) {
    const auto first = static_cast<std::int64_t>(u(rng) * static_cast<double>(frames));
    const auto life = 5 + static_cast<std::int64_t>(u(rng) * 16.0);
    const auto& T = poses[std::min(first, frames - 1)];
    const Vec2 fwd(T.rotation(0, 2), T.rotation(1, 2));
    const Vec2 side(-fwd.y(), fwd.x());
    const Point2 cam(T.translation.x(), T.translation.y());
    for (int attempt = 0; attempt < 10; ++attempt) {
      const Point2 centre = cam + (1.5 + 2.5 * u(rng)) * fwd + (2.0 * u(rng) - 1.0) * side;
      const double facing = std::atan2(side.y(), side.x()) + deg2rad(90.0 * u(rng) - 45.0);
      const double half = 0.2 + 0.4 * u(rng);
      const Vec2 d(std::cos(facing), std::sin(facing));
      const Segment2 base{centre - half * d, centre + half * d};
      const double z1 = 0.5 + u(rng);
      bool clear = true;
      for (const auto& w : walls) {
        if (geometry::segments_touch(base, w) || point_segment_distance(base.a, w) < 0.2 ||
            point_segment_distance(base.b, w) < 0.2 || point_segment_distance(centre, w) < 0.2) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      out.push_back({base, 0.0, z1, first, std::min(first + life, frames)});
      break;
    }
  }
  return out;
}

void generate_frames(const SceneSpec& s, const std::function<void(const stereo::FrameRecord&)>& sink) {
  validate(s);
  const auto poses = camera_poses(s);
  const auto walls = ground_truth_walls(s);
  const auto clutter = clutter_patches(s);
  Point2 lo = Point2::Constant(std::numeric_limits<double>::infinity());
  Point2 hi = -lo;
  for (const auto& w : walls) {
    lo = lo.cwiseMin(w.a).cwiseMin(w.b);
    hi = hi.cwiseMax(w.a).cwiseMax(w.b);
  }
  const double half_fov = std::atan2(s.width / 2.0, s.K.fx) + deg2rad(5.0);

  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto& T = poses[k];
    const auto fk = static_cast<std::int64_t>(k);
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<Surface> surfaces;
    for (const auto& w : walls) surfaces.push_back({w, 0.0, s.wall_height});
    const std::size_t n_walls = surfaces.size();
    for (const auto& c : clutter) {
      if (fk >= c.first && fk < c.last) surfaces.push_back({c.base, c.z0, c.z1});
    }

    const Point3 cam = T.translation;
    const Point2 cam2(cam.x(), cam.y());
    const Eigen::Matrix3d Rt = T.rotation.transpose();

    stereo::FrameRecord rec;
    rec.frame = s.first_frame + fk;
    rec.keyframe = fk % s.keyframe_interval == 0;
    rec.T_wc = s.frame_offset.compose(T);
    rec.K = s.K;

    // own < 0: floor or ceiling.
    auto emit = [&](const Point3& p, int own, bool edge) {
      const Vec3 pc = Rt * (p - cam);
      if (pc.z() < s.min_range || pc.z() > s.max_range) return;
      const auto uvd = stereo::project(pc, s.K);
      if (uvd[0] < 0.0 || uvd[0] >= s.width || uvd[1] < 0.0 || uvd[1] >= s.height) return;
      const Vec2 ray = Point2(p.x(), p.y()) - cam2;
      for (std::size_t o = 0; o < surfaces.size(); ++o) {
        if (static_cast<int>(o) == own) continue;
        const Vec2 e = surfaces[o].base.b - surfaces[o].base.a;
        const double denom = geometry::cross2(ray, e);
        if (std::abs(denom) < 1e-12) continue;
        const Vec2 ac = surfaces[o].base.a - cam2;
        const double t = geometry::cross2(ac, e) / denom;
        const double w = geometry::cross2(ac, ray) / denom;
        if (t <= 1e-9 || t >= 1.0 - 1e-6 || w < 0.0 || w > 1.0) continue;
        const double z = cam.z() + t * (p.z() - cam.z());
        if (z >= surfaces[o].z0 && z <= surfaces[o].z1) return;
      }
      const Point3 noisy = p + s.sigma * Vec3(noise(rng), noise(rng), noise(rng));
      const Vec3 pn = Rt * (noisy - cam);
      if (pn.z() <= 0.05) return;
      const auto m = stereo::project(pn, s.K);
      stereo::SupportPoint sp;
      sp.u = m[0];
      sp.v = m[1];
      sp.d = m[2];
      sp.kind = edge ? stereo::FeatureKind::kEdge : stereo::FeatureKind::kCorner;
      rec.points.push_back(sp);
    };

    for (std::size_t i = 0; i < surfaces.size(); ++i) {
      const auto& sf = surfaces[i];
      const auto span = disc_interval(sf.base, cam2, s.max_range);
      if (!span) continue;
      const double len = sf.base.length();
      const double area = (span->second - span->first) * len * (sf.z1 - sf.z0);
      const int n = std::poisson_distribution<int>(s.point_density * area)(rng);
      for (int q = 0; q < n; ++q) {
        const double t = span->first + (span->second - span->first) * u(rng);
        const double z = sf.z0 + (sf.z1 - sf.z0) * u(rng);
        const Point2 g = sf.base.at(t);
        const bool edge = std::min(t, 1.0 - t) * len < 0.05 || std::min(z - sf.z0, sf.z1 - z) < 0.05;
        emit({g.x(), g.y(), z}, static_cast<int>(i), edge || i >= n_walls);
      }
    }
    if (s.floor_density_factor > 0.0) {
      const double yaw = std::atan2(T.rotation(1, 2), T.rotation(0, 2));
      const double area = half_fov * s.max_range * s.max_range;  // sector of angle 2 * half_fov
      for (double z : {0.0, s.wall_height}) {
        const int n = std::poisson_distribution<int>(s.point_density * s.floor_density_factor * area)(rng);
        for (int q = 0; q < n; ++q) {
          const double r = s.max_range * std::sqrt(u(rng));
          const double a = yaw + half_fov * (2.0 * u(rng) - 1.0);
          const Point2 g = cam2 + r * Vec2(std::cos(a), std::sin(a));
          if (g.x() < lo.x() || g.y() < lo.y() || g.x() > hi.x() || g.y() > hi.y()) continue;
          emit({g.x(), g.y(), z}, -1, false);
        }
      }
    }
    sink(rec);
  }
}

std::vector<stereo::FrameRecord> generate_frames(const SceneSpec& s) {
  std::vector<stereo::FrameRecord> out;
  generate_frames(s, [&](const stereo::FrameRecord& f) { out.push_back(f); });
  return out;
}

SceneSpec corner_scene(std::uint64_t seed) {
  SceneSpec s;
  s.walls = {{{4, -1}, {4, 4}, {-1, 4}}};
  s.trajectory = {{1, 1}, {1.05, 1.05}};
  s.frames = 1;
  s.yaw_sweep_deg = 0.0;
  s.sigma = 0.005;
  s.floor_density_factor = 0.0;
  s.seed = seed;
  return s;
}

SceneSpec one_room_scene(std::uint64_t seed) {
  SceneSpec s;
  s.walls = {{{0, 0}, {6, 0}, {6, 4}, {0, 4}, {0, 0}}};
  s.trajectory = {{1.2, 1.2}, {4.8, 1.2}, {4.8, 2.8}, {1.2, 2.8}, {1.2, 1.2}};
  s.frames = 200;
  s.clutter_density = 0.05;
  s.seed = seed;
  return s;
}

SceneSpec door_room_scene(std::uint64_t seed) {
  SceneSpec s;
  s.walls = {{{0, 0}, {6, 0}, {6, 5}, {0, 5}, {0, 0}}};
  s.doors = {{{{2.5, 0}, {3.5, 0}}, true}};
  s.trajectory = {{3, -2}, {3, 1.5}, {4.8, 2.5}, {3, 3.6}, {1.2, 2.5}, {3, 1.5}, {3, -2}};
  s.clutter_density = 0.05;
  s.seed = seed;
  return s;
}

SceneSpec three_room_scene(std::uint64_t seed) {
  SceneSpec s;
  s.walls = {{{0, 0}, {12, 0}, {12, 8.5}, {0, 8.5}, {0, 0}}, {{0, 3.5}, {12, 3.5}}, {{6, 3.5}, {6, 8.5}}};
  s.doors = {{{{2.5, 3.5}, {3.5, 3.5}}, true}, {{{8.5, 3.5}, {9.5, 3.5}}, true}};
  s.trajectory = {{1.0, 1.75}, {3.0, 1.75}, {3.0, 5.0}, {4.8, 6.0}, {3.0, 7.3}, {1.2, 6.0},
                  {3.0, 5.0}, {3.0, 1.75}, {9.0, 1.75}, {9.0, 5.0}, {10.8, 6.0}, {9.0, 7.3},
                  {7.2, 6.0}, {9.0, 5.0}, {9.0, 1.75}, {11.0, 1.75}, {11.0, 1.0}, {1.0, 1.0}};
  s.step = 0.06;
  s.clutter_density = 0.1;
  s.seed = seed;
  return s;
}

SceneSpec five_part_scene(std::uint64_t seed, int part) {
  SceneSpec s;
  s.walls = {{{0, 0}, {16, 0}, {16, 8}, {0, 8}, {0, 0}}, {{0, 3}, {16, 3}}};
  for (int k = 1; k < 4; ++k) s.walls.push_back({{4.0 * k, 3}, {4.0 * k, 8}});
  for (int k = 0; k < 4; ++k) s.doors.push_back({{{4.0 * k + 1.5, 3}, {4.0 * k + 2.5, 3}}, false});
  auto room_loop = [](int k) {
    const double x = 4.0 * k + 2.0;
    return std::vector<Point2>{{x, 1.5}, {x, 4.5}, {x + 1.2, 5.5}, {x, 6.8}, {x - 1.2, 5.5}, {x, 4.5}, {x, 1.5}};
  };
  if (part >= 0 && part < 4) {
    s.trajectory = room_loop(part);
    s.doors[part].traversed = true;
  } else if (part == 4) {
    s.trajectory = {{0.8, 1.5}, {15.2, 1.5}, {15.2, 1.0}, {0.8, 1.0}};
  } else {
    s.trajectory = {{0.8, 1.5}};
    for (int k = 0; k < 4; ++k) {
      const auto loop = room_loop(k);
      s.trajectory.insert(s.trajectory.end(), loop.begin(), loop.end());
      s.doors[k].traversed = true;
    }
    s.trajectory.insert(s.trajectory.end(), {{15.2, 1.5}, {15.2, 1.0}, {0.8, 1.0}});
  }
  s.step = 0.06;
  s.clutter_density = 0.05;
  s.seed = seed;
  return s;
}

SceneSpec grid_scene(int nx, int ny, std::uint64_t seed) {
  if (nx < 1 || ny < 1) throw InvalidScene("grid needs at least one room");
  SceneSpec s;
  const double w = 4.0;
  for (int j = 0; j <= ny; ++j) s.walls.push_back({{0, w * j}, {w * nx, w * j}});
  for (int i = 0; i <= nx; ++i) s.walls.push_back({{w * i, 0}, {w * i, w * ny}});
  s.trajectory = {{1.0, 2.0}};
  for (int j = 0; j < ny; ++j) {
    const double y = w * j + 2.0;
    const bool east = j % 2 == 0;
    for (int i = 1; i < nx; ++i) s.doors.push_back({{{w * i, y - 0.5}, {w * i, y + 0.5}}, true});
    const double x_end = east ? w * nx - 2.0 : 2.0;
    s.trajectory.push_back({x_end, y});
    if (j + 1 < ny) {
      s.doors.push_back({{{x_end - 0.5, w * (j + 1)}, {x_end + 0.5, w * (j + 1)}}, true});
      s.trajectory.push_back({x_end, y + w});
    }
  }
  s.step = 0.06;
  s.seed = seed;
  return s;
}

SceneSpec preset_scene(const std::string& name, std::uint64_t seed) {
  if (name == "corner") return corner_scene(seed);
  if (name == "one-room") return one_room_scene(seed);
  if (name == "door-room") return door_room_scene(seed);
  if (name == "three-room") return three_room_scene(seed);
  if (name == "five-part") return five_part_scene(seed);
  if (name == "grid") return grid_scene(3, 2, seed);
  throw InvalidScene("unknown preset '" + name + "'");
}

EvalReport hausdorff_eval(const std::vector<Segment2>& model, const std::vector<Segment2>& gt,
                          std::size_t n_samples, std::uint64_t seed, double coverage_tol) {
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& s : model) cum.push_back(total += s.length());
  if (model.empty() || total <= 0.0) throw EmptyModel();
  if (gt.empty()) throw InvalidScene("ground truth has no walls");
  if (n_samples == 0) throw Error("need at least one evaluation sample");

  auto nearest = [](const Point2& p, const std::vector<Segment2>& segs) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : segs) best = std::min(best, point_segment_distance(p, s));
    return best;
  };

  EvalReport r;
  r.samples = n_samples;
  r.coverage_tol = coverage_tol;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double at = u(rng) * total;
    const auto i = std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), at) - cum.begin(), model.size() - 1);
    const double d = nearest(model[i].at(u(rng)), gt);
    sum += d;
    sq += d * d;
    r.max = std::max(r.max, d);
  }
  r.mean = sum / static_cast<double>(n_samples);
  r.rms = std::sqrt(sq / static_cast<double>(n_samples));

  double gt_total = 0.0;
  for (const auto& s : gt) gt_total += s.length();
  const double spacing = gt_total / static_cast<double>(n_samples);
  sum = sq = 0.0;
  std::size_t count = 0, covered_all = 0;
  for (const auto& s : gt) {
    const double len = s.length();
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len / spacing)));
    std::size_t covered = 0;
    for (std::size_t q = 0; q < n; ++q) {
      const double d = nearest(s.at((static_cast<double>(q) + 0.5) / static_cast<double>(n)), model);
      sum += d;
      sq += d * d;
      r.gt_max = std::max(r.gt_max, d);
      covered += d <= coverage_tol;
    }
    count += n;
    covered_all += covered;
    r.per_wall_coverage.push_back(static_cast<double>(covered) / static_cast<double>(n));
  }
  r.gt_mean = sum / static_cast<double>(count);
  r.gt_rms = std::sqrt(sq / static_cast<double>(count));
  r.symmetric_max = std::max(r.max, r.gt_max);
  r.coverage_deficit = 1.0 - static_cast<double>(covered_all) / static_cast<double>(count);
  return r;
}

EvalReport hausdorff_eval(const opt::FloorplanModel& model, const SceneSpec& gt, std::size_t n_samples,
                          std::uint64_t seed, double coverage_tol) {
  std::vector<Segment2> walls;
  for (const auto& w : ground_truth_walls(gt)) {
    const Point3 a = gt.frame_offset.apply({w.a.x(), w.a.y(), 0.0});
    const Point3 b = gt.frame_offset.apply({w.b.x(), w.b.y(), 0.0});
    walls.push_back({{a.x(), a.y()}, {b.x(), b.y()}});
  }
  return hausdorff_eval(model.wall_segments(), walls, n_samples, seed, coverage_tol);
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"model_to_gt", {{"mean", r.mean}, {"rms", r.rms}, {"max", r.max}}},
          {"gt_to_model", {{"mean", r.gt_mean}, {"rms", r.gt_rms}, {"max", r.gt_max}}},
          {"symmetric_max", r.symmetric_max},
          {"samples", r.samples},
          {"coverage_tol", r.coverage_tol},
          {"coverage_deficit", r.coverage_deficit},
          {"per_wall_coverage", r.per_wall_coverage}};
}

}  // namespace floorplan::scene
