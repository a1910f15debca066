#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "floorplan/frame_io.hpp"
#include "floorplan/scenegen_eval.hpp"

using namespace floorplan::scene;
using floorplan::geometry::point_segment_distance;
using floorplan::geometry::Point3;
using floorplan::geometry::RigidTransform;
using floorplan::geometry::Vec3;
using floorplan::stereo::FeatureKind;
using floorplan::stereo::FrameReader;
using floorplan::stereo::FrameRecord;
using floorplan::stereo::MalformedFrame;
using floorplan::stereo::triangulate;

namespace {

FrameRecord sample_frame(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FrameRecord f;
  f.frame = static_cast<std::int64_t>(seed * 7);
  f.keyframe = seed % 2 == 0;
  f.T_wc = RigidTransform::from_quaternion(
      Eigen::Quaterniond(u(rng), u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5).normalized(),
      {u(rng) * 10, u(rng) * 10, u(rng)});
  f.K = {300.0 + u(rng), 301.0, 320.5, 180.25, 0.12};
  for (int k = 0; k < 50; ++k) {
    floorplan::stereo::SupportPoint p;
    p.u = u(rng) * 640;
    p.v = u(rng) * 360;
    p.d = 1.0 + u(rng) * 30;
    p.kind = k % 3 == 0 ? FeatureKind::kEdge : FeatureKind::kCorner;
    f.points.push_back(p);
  }
  return f;
}

// World position of every support point of a frame.
std::vector<Point3> world_points(const FrameRecord& f) {
  std::vector<Point3> out;
  for (const auto& p : f.points) out.push_back(f.T_wc.apply(triangulate(p.u, p.v, p.d, f.K)));
  return out;
}

double distance_to_walls(const Point3& p, const std::vector<Segment2>& walls) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& w : walls) best = std::min(best, point_segment_distance({p.x(), p.y()}, w));
  return best;
}

SceneSpec single_wall(double sigma) {
  SceneSpec s;
  s.walls = {{{-3, 3}, {3, 3}}};
  s.trajectory = {{-1, 0}, {1, 0}};
  s.frames = 20;
  s.yaw_sweep_deg = 10;
  s.sigma = sigma;
  s.floor_density_factor = 0.0;
  return s;
}

}  // namespace

TEST_CASE("frame records survive a JSON round trip") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = sample_frame(seed);
    std::stringstream ss;
    floorplan::stereo::write_frame(ss, f);
    FrameReader reader(ss);
    const auto g = reader.next();
    REQUIRE(g);
    CHECK(g->frame == f.frame);
    CHECK(g->keyframe == f.keyframe);
    CHECK((g->T_wc.rotation - f.T_wc.rotation).norm() < 1e-12);
    CHECK((g->T_wc.translation - f.T_wc.translation).norm() == 0.0);
    CHECK(g->K.fx == f.K.fx);
    REQUIRE(g->points.size() == f.points.size());
    for (std::size_t k = 0; k < f.points.size(); ++k) {
      CHECK(g->points[k].u == f.points[k].u);
      CHECK(g->points[k].d == f.points[k].d);
      CHECK(g->points[k].kind == f.points[k].kind);
    }
    CHECK_FALSE(reader.next());
  }
}

TEST_CASE("malformed lines are reported with their line number") {
  std::stringstream ss;
  floorplan::stereo::write_frame(ss, sample_frame(1));
  ss << "\n";
  floorplan::stereo::write_frame(ss, sample_frame(2));
  ss << "{\"frame\": 3, \"keyframe\": true}\n";
  FrameReader reader(ss);
  CHECK(reader.next());
  CHECK(reader.next());
  try {
    (void)reader.next();
    FAIL("expected MalformedFrame");
  } catch (const MalformedFrame& e) {
    CHECK(e.line == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_FALSE(reader.next());
}

TEST_CASE("frame validation") {
  auto j = floorplan::stereo::frame_to_json(sample_frame(3));
  SUBCASE("non-unit quaternion") {
    j["pose"]["q"] = {1.0, 0.1, 0.0, 0.0};
    CHECK_THROWS_AS((void)floorplan::stereo::frame_from_json(j), MalformedFrame);
  }
  SUBCASE("non-positive disparity") {
    j["points"][0]["d"] = 0.0;
    CHECK_THROWS_AS((void)floorplan::stereo::frame_from_json(j), MalformedFrame);
  }
  SUBCASE("unknown point kind") {
    j["points"][0]["kind"] = "blob";
    CHECK_THROWS_AS((void)floorplan::stereo::frame_from_json(j), MalformedFrame);
  }
  SUBCASE("wrong type") {
    j["frame"] = "seven";
    CHECK_THROWS_AS((void)floorplan::stereo::frame_from_json(j), MalformedFrame);
  }
  SUBCASE("bad intrinsics") {
    j["intrinsics"]["baseline"] = -0.1;
    CHECK_THROWS_AS((void)floorplan::stereo::frame_from_json(j), MalformedFrame);
  }
}

TEST_CASE("noise-free points lie exactly on the wall plane") {
  const auto s = single_wall(0.0);
  const auto frames = generate_frames(s);
  REQUIRE(frames.size() == 20);
  std::size_t total = 0;
  for (const auto& f : frames) {
    for (const auto& p : f.points) {
      CHECK(p.u >= 0.0);
      CHECK(p.u < s.width);
      CHECK(p.v >= 0.0);
      CHECK(p.v < s.height);
      CHECK(p.d > 0.0);
    }
    for (const auto& p : world_points(f)) {
      CHECK(std::abs(p.y() - 3.0) < 1e-9);
      CHECK(p.z() >= -1e-9);
      CHECK(p.z() <= s.wall_height + 1e-9);
    }
    total += f.points.size();
  }
  CHECK(total > 1000);
}

TEST_CASE("noise level shows in the plane residual") {
  const auto frames = generate_frames(single_wall(0.01));
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : frames) {
    for (const auto& p : world_points(f)) {
      sq += (p.y() - 3.0) * (p.y() - 3.0);
      ++n;
    }
  }
  CHECK(std::sqrt(sq / static_cast<double>(n)) == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("doubling the density doubles the point count") {
  auto s = one_room_scene(4);
  s.frames = 100;
  s.clutter_density = 0.0;
  auto count = [](const SceneSpec& spec) {
    std::size_t n = 0;
    generate_frames(spec, [&](const FrameRecord& f) { n += f.points.size(); });
    return static_cast<double>(n);
  };
  const double base = count(s);
  s.point_density *= 2.0;
  const double doubled = count(s);
  CHECK(doubled / base == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("without clutter every point is on a wall, the floor or the ceiling") {
  auto s = three_room_scene(2);
  s.sigma = 0.0;
  s.clutter_density = 0.0;
  s.frames = 60;
  const auto gt = ground_truth_walls(s);
  generate_frames(s, [&](const FrameRecord& f) {
    for (const auto& p : world_points(f)) {
      const bool flat = std::abs(p.z()) < 1e-9 || std::abs(p.z() - s.wall_height) < 1e-9;
      CHECK((flat || distance_to_walls(p, gt) < 1e-9));
    }
  });
}

TEST_CASE("clutter points lie on active clutter patches") {
  auto s = one_room_scene(3);
  s.sigma = 0.0;
  s.clutter_density = 0.3;
  s.floor_density_factor = 0.0;
  const auto gt = ground_truth_walls(s);
  const auto patches = clutter_patches(s);
  REQUIRE_FALSE(patches.empty());
  std::size_t on_clutter = 0;
  std::int64_t k = 0;
  generate_frames(s, [&](const FrameRecord& f) {
    for (const auto& p : world_points(f)) {
      if (distance_to_walls(p, gt) < 1e-9) continue;
      bool found = false;
      for (const auto& c : patches) {
        if (k < c.first || k >= c.last) continue;
        found |= point_segment_distance({p.x(), p.y()}, c.base) < 1e-9 && p.z() >= c.z0 - 1e-9 &&
                 p.z() <= c.z1 + 1e-9;
      }
      CHECK(found);
      ++on_clutter;
    }
    ++k;
  });
  CHECK(on_clutter > 0);
  for (const auto& c : patches) {
    CHECK(c.last - c.first >= 1);
    CHECK(c.last - c.first <= 20);
    for (const auto& w : gt) CHECK(point_segment_distance(c.base.a, w) >= 0.2);
  }
}

TEST_CASE("walls hide what is behind them") {
  SceneSpec s;
  s.walls = {{{-1, 2}, {1, 2}}, {{-4, 4}, {4, 4}}};
  s.trajectory = {{0, 0}, {0, 0.5}};
  s.frames = 5;
  s.yaw_sweep_deg = 0.0;
  s.sigma = 0.0;
  s.floor_density_factor = 0.0;
  std::size_t far_visible = 0;
  generate_frames(s, [&](const FrameRecord& f) {
    const Point3 cam = f.T_wc.translation;
    for (const auto& p : world_points(f)) {
      if (std::abs(p.y() - 4.0) > 1e-9) continue;
      ++far_visible;
      // The ray to a far-wall point must pass beside or above the near wall.
      const double t = (2.0 - cam.y()) / (p.y() - cam.y());
      const double x = cam.x() + t * (p.x() - cam.x());
      const double z = cam.z() + t * (p.z() - cam.z());
      CHECK((std::abs(x) > 1.0 - 1e-9 || z > s.wall_height || z < 0.0));
    }
  });
  CHECK(far_visible > 0);
}

TEST_CASE("generation is bit-reproducible and seed dependent") {
  auto s = door_room_scene(11);
  s.frames = 40;
  auto dump = [](const SceneSpec& spec) {
    std::stringstream ss;
    generate_frames(spec, [&](const FrameRecord& f) { floorplan::stereo::write_frame(ss, f); });
    return ss.str();
  };
  const auto a = dump(s);
  CHECK(a == dump(s));
  s.seed = 12;
  CHECK(a != dump(s));
}

TEST_CASE("frame numbering, keyframes and the recording frame") {
  auto s = single_wall(0.0);
  s.first_frame = 100;
  s.keyframe_interval = 4;
  const auto plain = generate_frames(s);
  s.frame_offset = RigidTransform::yaw(0.7, {2.0, -1.0, 0.5});
  const auto moved = generate_frames(s);
  REQUIRE(plain.size() == moved.size());
  for (std::size_t k = 0; k < plain.size(); ++k) {
    CHECK(plain[k].frame == 100 + static_cast<std::int64_t>(k));
    CHECK(plain[k].keyframe == (k % 4 == 0));
    const auto expect = s.frame_offset.compose(plain[k].T_wc);
    CHECK((moved[k].T_wc.rotation - expect.rotation).norm() < 1e-12);
    CHECK((moved[k].T_wc.translation - expect.translation).norm() < 1e-12);
  }
  const auto w = world_points(moved[3]);
  for (const auto& p : w) {
    const Point3 back = s.frame_offset.inverse().apply(p);
    CHECK(std::abs(back.y() - 3.0) < 1e-9);
  }
}

TEST_CASE("scene validation and JSON") {
  SUBCASE("round trip") {
    auto s = door_room_scene(5);
    s.frame_offset = RigidTransform::yaw(0.25, {1, 2, 0});
    const auto j = scene_to_json(s);
    CHECK(scene_to_json(scene_from_json(j)) == j);
  }
  SUBCASE("unknown key") {
    auto j = scene_to_json(corner_scene(1));
    j["colour"] = "blue";
    CHECK_THROWS_AS((void)scene_from_json(j), InvalidScene);
  }
  SUBCASE("door off the walls") {
    auto s = door_room_scene(1);
    s.doors[0].span = {{2.5, 0.3}, {3.5, 0.3}};
    CHECK_THROWS_AS(validate(s), InvalidScene);
  }
  SUBCASE("traversed door the trajectory misses") {
    auto s = door_room_scene(1);
    s.trajectory = {{1, 1}, {5, 1}};
    CHECK_THROWS_AS(validate(s), InvalidScene);
  }
  SUBCASE("negative noise") {
    auto s = corner_scene(1);
    s.sigma = -0.01;
    CHECK_THROWS_AS(validate(s), InvalidScene);
  }
  SUBCASE("presets") {
    for (const char* name : {"corner", "one-room", "door-room", "three-room", "five-part", "grid"}) {
      CHECK_NOTHROW(validate(preset_scene(name, 1)));
    }
    for (int part = -1; part <= 4; ++part) CHECK_NOTHROW(validate(five_part_scene(1, part)));
    CHECK_THROWS_AS((void)preset_scene("castle", 1), InvalidScene);
  }
}

TEST_CASE("doors are cut out of the ground truth") {
  const auto gt = ground_truth_walls(door_room_scene(1));
  REQUIRE(gt.size() == 5);
  double total = 0.0;
  for (const auto& w : gt) total += w.length();
  CHECK(total == doctest::Approx(21.0));
  for (const auto& w : gt) CHECK(point_segment_distance({3.0, 0.0}, w) >= 0.5 - 1e-12);
}

TEST_CASE("evaluation on known models") {
  const std::vector<Segment2> gt{{{0, 0}, {4, 0}}, {{4, 0}, {4, 3}}, {{4, 3}, {0, 3}}, {{0, 3}, {0, 0}}};

  SUBCASE("identical model") {
    const auto r = hausdorff_eval(gt, gt);
    CHECK(r.samples == 10000);
    CHECK(r.mean < 1e-12);
    CHECK(r.gt_mean < 1e-12);
    CHECK(r.coverage_deficit < 1e-12);
  }
  SUBCASE("parallel offset") {
    const std::vector<Segment2> model{{{-1, -0.1}, {5, -0.1}}};
    const auto r = hausdorff_eval(model, {{{-1, 0}, {5, 0}}});
    CHECK(r.mean == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(r.max == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(r.rms == doctest::Approx(0.1).epsilon(1e-6));
  }
  SUBCASE("missing wall") {
    const std::vector<Segment2> model(gt.begin(), gt.begin() + 3);
    const auto r = hausdorff_eval(model, gt);
    CHECK(r.mean < 1e-12);
    REQUIRE(r.per_wall_coverage.size() == 4);
    CHECK(r.per_wall_coverage[3] < 0.1);
    CHECK(r.coverage_deficit == doctest::Approx(3.0 / 14.0).epsilon(0.02));
    CHECK(r.gt_max == doctest::Approx(1.5).epsilon(0.01));
  }
  SUBCASE("ground-truth order does not matter") {
    const std::vector<Segment2> model{{{0, 0.05}, {4, 0.02}}, {{4.1, 0}, {4.1, 3}}};
    auto shuffled = gt;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto a = hausdorff_eval(model, gt, 5000, 9);
    const auto b = hausdorff_eval(model, shuffled, 5000, 9);
    CHECK(a.mean == b.mean);
    CHECK(a.max == b.max);
    CHECK(a.gt_mean == doctest::Approx(b.gt_mean).epsilon(1e-12));
  }
  SUBCASE("seeded") {
    const std::vector<Segment2> model{{{0, 0.05}, {4, 0.3}}};
    CHECK(hausdorff_eval(model, gt, 1000, 3).mean == hausdorff_eval(model, gt, 1000, 3).mean);
  }
  SUBCASE("empty model") {
    CHECK_THROWS_AS((void)hausdorff_eval(std::vector<Segment2>{}, gt), EmptyModel);
    floorplan::opt::FloorplanModel m;
    CHECK_THROWS_AS((void)hausdorff_eval(m, one_room_scene(1)), EmptyModel);
  }
}

TEST_CASE("floorplan evaluation follows the recording frame") {
  auto s = one_room_scene(1);
  s.frame_offset = RigidTransform::yaw(0.5, {3, 1, 0});
  floorplan::opt::FloorplanModel m;
  for (const auto& w : ground_truth_walls(s)) {
    const int i = static_cast<int>(m.vertices.size());
    for (const auto& p : {w.a, w.b}) {
      const Point3 q = s.frame_offset.apply(Point3(p.x(), p.y(), 0.0));
      m.vertices.push_back({q.x(), q.y()});
    }
    m.walls.push_back({i, i + 1});
  }
  const auto r = hausdorff_eval(m, s);
  CHECK(r.mean < 1e-9);
  CHECK(r.coverage_deficit < 1e-9);
  const auto j = report_to_json(r);
  CHECK(j.at("samples") == 10000);
}
