#include <doctest.h>

#include <cmath>
#include <random>

#include "floorplan/landmark_manager.hpp"

using namespace floorplan::landmarks;
using floorplan::geometry::deg2rad;
using floorplan::geometry::normal_angle;
using floorplan::geometry::rad2deg;
using floorplan::geometry::Vec3;

namespace {

// Points scattered on the plane through `center` with normal `n`.
std::vector<Point3> patch(const Vec3& n, const Point3& center, int count, double spread,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  const Vec3 e1 = n.normalized().unitOrthogonal();
  const Vec3 e2 = n.normalized().cross(e1);
  std::vector<Point3> pts;
  for (int i = 0; i < count; ++i) pts.push_back(center + u(rng) * e1 + u(rng) * e2);
  return pts;
}

WorldFeature feature(const Vec3& n, const Point3& center, std::uint64_t seed = 1, int count = 60) {
  WorldFeature f;
  f.plane = PlaneCartesian::from_point_normal(center, n);
  f.support = patch(n, center, count, 0.5, seed);
  return f;
}

Vec3 tilted(double deg) { return Vec3(std::cos(deg2rad(deg)), std::sin(deg2rad(deg)), 0.0); }

PlaneLandmark landmark_with(const Vec3& n, const Point3& c, int frames, int keyframes,
                            LandmarkState state, std::uint64_t seed = 3) {
  PlaneLandmark lm;
  lm.plane = PlaneCartesian::from_point_normal(c, n).canonical();
  lm.support = patch(n, c, 50, 0.5, seed);
  lm.frames_observed = frames;
  for (int k = 0; k < keyframes; ++k) lm.keyframes_observed.insert(frame_key(0, 5 * k));
  lm.state = state;
  return lm;
}

// Feeds `frames` observations of one feature, the first `keyframes` of them keyframes.
LandmarkMap observed(int frames, int keyframes) {
  LandmarkMap map;
  const auto f = feature(Vec3(1, 0, 0), Point3(2, 0, 1));
  for (int i = 0; i < frames; ++i) (void)map.observe(f, i, i < keyframes);
  return map;
}

}  // namespace

TEST_CASE("match examples") {
  LandmarkMap map;
  const auto f = feature(Vec3(1, 0, 0), Point3(2, 0, 1));
  const int id = *map.observe(f, 0, true);
  CHECK(map.match(f.plane, f.support) == id);

  const auto off = feature(tilted(10), Point3(2, 0, 1));
  CHECK_FALSE(map.match(off.plane, off.support).has_value());

  const auto far = feature(Vec3(1, 0, 0), Point3(2.05, 0, 1));
  CHECK_FALSE(map.match(far.plane, far.support).has_value());
}

TEST_CASE("smallest angle wins among admissible landmarks") {
  // A at 3 degrees, B at 4 degrees from the feature, both passing through a
  // point 1 cm from the feature's support.
  const Point3 c(2, 0, 1);
  auto lms = std::map<int, PlaneLandmark>{};
  lms[0] = landmark_with(tilted(3), c + Vec3(0.01, 0, 0), 1, 1, LandmarkState::kInvalid);
  lms[0].id = 0;
  lms[1] = landmark_with(tilted(-4), c + Vec3(0.01, 0, 0), 1, 1, LandmarkState::kInvalid);
  lms[1].id = 1;
  const auto map = LandmarkMap::restore({}, 0, lms, {}, 2, 0);
  WorldFeature f;
  f.plane = PlaneCartesian::from_point_normal(c, Vec3(1, 0, 0));
  f.support = {c};
  // exhaustive reference over all landmarks
  int expected = -1;
  double best = 1e9;
  for (const auto& [id, lm] : map.landmarks()) {
    const double ang = rad2deg(normal_angle(f.plane.n, lm.plane.n));
    const double dist = std::abs(lm.plane.signed_distance(c));
    if (ang < 5.0 && dist < 0.02 && ang < best) {
      best = ang;
      expected = id;
    }
  }
  CHECK(expected == 0);
  CHECK(map.match(f.plane, f.support) == expected);
}

TEST_CASE("promotion boundary grid") {
  for (int frames : {30, 31}) {
    for (int keyframes : {3, 4}) {
      const auto map = observed(frames, keyframes);
      REQUIRE(map.landmarks().size() == 1);
      const auto& lm = map.landmarks().begin()->second;
      CHECK(lm.frames_observed == frames);
      CHECK(static_cast<int>(lm.keyframes_observed.size()) == keyframes);
      const bool valid = lm.state == LandmarkState::kValid;
      CHECK(valid == (frames == 31 && keyframes == 4));
    }
  }
}

TEST_CASE("non-keyframe features never create landmarks") {
  LandmarkMap map;
  CHECK_FALSE(map.observe(feature(Vec3(1, 0, 0), Point3(2, 0, 1)), 0, false).has_value());
  CHECK(map.landmarks().empty());
}

TEST_CASE("a frame counts once per landmark") {
  LandmarkMap map;
  const auto f = feature(Vec3(1, 0, 0), Point3(2, 0, 1), 1);
  const auto g = feature(Vec3(1, 0, 0), Point3(2, 0.8, 1), 2);
  const int id = *map.observe(f, 0, true);
  CHECK(map.observe(g, 0, true) == id);
  CHECK(map.landmark(id).frames_observed == 1);
  CHECK(map.landmark(id).keyframes_observed.size() == 1);
}

TEST_CASE("keyframe aggregation refits the plane") {
  LandmarkMap map;
  const Vec3 n(1, 0, 0);
  const int id = *map.observe(feature(n, Point3(2, 0, 1), 1), 0, true);
  (void)map.observe(feature(n, Point3(2.005, 1.0, 1), 2), 5, true);
  const auto& lm = map.landmark(id);
  CHECK(lm.support.size() == 120);
  CHECK(std::abs(lm.plane.d + 2.0025) < 0.003);
  (void)map.observe(feature(n, Point3(2, 0, 1), 3), 6, false);
  CHECK(map.landmark(id).support.size() == 120);
}

TEST_CASE("demote examples") {
  std::map<int, PlaneLandmark> lms;
  lms[0] = landmark_with(Vec3(1, 0, 0), Point3(0, 0, 0), 40, 1, LandmarkState::kValid);
  lms[1] = landmark_with(Vec3(0, 1, 0), Point3(0, 3, 0), 40, 2, LandmarkState::kValid);
  lms[2] = landmark_with(Vec3(1, 1, 0), Point3(5, 3, 0), 4, 1, LandmarkState::kInvalid);
  for (auto& [id, lm] : lms) lm.id = id;
  auto map = LandmarkMap::restore({}, 0, lms, {}, 3, 0);
  map.demote(0);
  map.demote(1);
  map.demote(2);
  map.demote(2);
  CHECK(map.landmark(0).state == LandmarkState::kInvalid);
  CHECK(map.landmark(1).state == LandmarkState::kValid);
  CHECK(map.landmark(2).state == LandmarkState::kInvalid);
  CHECK_THROWS_AS(map.demote(9), UnknownLandmark);
}

TEST_CASE("observation pruning drives demotion") {
  LandmarkConfig cfg;
  cfg.prune_gate = 0.05;
  std::map<int, PlaneLandmark> lms;
  lms[0] = landmark_with(Vec3(1, 0, 0), Point3(0, 0, 0), 3, 2, LandmarkState::kValid);
  lms[0].observations = {{frame_key(0, 0), true, 0.01}, {frame_key(0, 5), true, 0.2}, {frame_key(0, 6), false, 0.0}};
  auto map = LandmarkMap::restore(cfg, 0, lms, {}, 1, 0);
  CHECK(map.prune_observations() == 1);
  CHECK(map.landmark(0).frames_observed == 2);
  CHECK(map.landmark(0).keyframes_observed.size() == 1);
  CHECK(map.landmark(0).state == LandmarkState::kInvalid);

  auto disabled = LandmarkMap::restore({}, 0, lms, {}, 1, 0);
  CHECK(disabled.prune_observations() == 0);
  CHECK(disabled.landmark(0).state == LandmarkState::kValid);
}

TEST_CASE("merge_landmarks examples") {
  auto make = [](int ka, int kb) {
    std::map<int, PlaneLandmark> lms;
    lms[0] = landmark_with(Vec3(1, 0, 0), Point3(2, 0, 0), 10, ka, LandmarkState::kInvalid, 3);
    lms[1] = landmark_with(Vec3(1, 0, 0), Point3(2, 0.3, 0), 10, kb, LandmarkState::kInvalid, 4);
    lms[0].id = 0;
    lms[1].id = 1;
    // distinct keyframes on the second landmark
    lms[1].keyframes_observed.clear();
    for (int k = 0; k < kb; ++k) lms[1].keyframes_observed.insert(frame_key(0, 100 + k));
    return LandmarkMap::restore({}, 0, lms, {}, 2, 0);
  };
  auto m1 = make(5, 2);
  CHECK(m1.merge_landmarks(1, 0) == 0);
  CHECK(m1.landmarks().size() == 1);
  CHECK(m1.landmark(0).keyframes_observed.size() == 7);
  CHECK(m1.landmark(0).frames_observed == 20);
  CHECK(m1.landmark(0).support.size() + m1.outliers_removed() == 100);

  auto m2 = make(3, 3);
  CHECK(m2.merge_landmarks(0, 1) == 0);
  CHECK_FALSE(m2.landmarks().contains(1));

  std::map<int, PlaneLandmark> lms;
  lms[0] = landmark_with(Vec3(1, 0, 0), Point3(2, 0, 0), 1, 1, LandmarkState::kInvalid);
  lms[1] = landmark_with(tilted(6), Point3(2, 0, 0), 1, 1, LandmarkState::kInvalid);
  lms[1].id = 1;
  auto m3 = LandmarkMap::restore({}, 0, lms, {}, 2, 0);
  CHECK_THROWS_AS(m3.merge_landmarks(0, 1), PreconditionNotMet);
  CHECK_THROWS_AS(m3.merge_landmarks(0, 7), UnknownLandmark);
}

TEST_CASE("merge pass reaches a fixed point") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> which(0, 3), kf(1, 6);
  std::uniform_real_distribution<double> jitter(-0.004, 0.004), ang(-2.0, 2.0);
  const Vec3 normals[] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  const Point3 centers[] = {Point3(0, 0, 0), Point3(0, 2, 0), Point3(4, 0, 0), Point3(0, -3, 0)};
  for (int rep = 0; rep < 10; ++rep) {
    std::map<int, PlaneLandmark> lms;
    for (int i = 0; i < 12; ++i) {
      const int w = which(rng);
      const Vec3 n = Eigen::AngleAxisd(deg2rad(ang(rng)), Vec3::UnitZ()) * normals[w];
      auto lm = landmark_with(n, centers[w] + normals[w] * jitter(rng), 40, kf(rng),
                              LandmarkState::kValid, 100 + i + 20 * rep);
      lm.id = i;
      lms[i] = lm;
    }
    auto map = LandmarkMap::restore({}, 0, lms, {}, 12, 0);
    (void)map.merge_pass();
    for (auto it = map.landmarks().begin(); it != map.landmarks().end(); ++it) {
      for (auto jt = std::next(it); jt != map.landmarks().end(); ++jt) {
        CHECK_FALSE(map.mergeable(it->second, jt->second));
      }
    }
    CHECK(map.landmarks().size() <= 4);
  }
}

TEST_CASE("merge_maps examples") {
  LandmarkMap a(LandmarkConfig{}, 0);
  (void)a.observe(feature(Vec3(1, 0, 0), Point3(2, 0, 1), 1), 0, true);
  (void)a.observe(feature(Vec3(0, 1, 0), Point3(0, 3, 1), 2), 0, true);
  a.add_pose({0, 0, true, RigidTransform::identity()});

  LandmarkMap b(LandmarkConfig{}, 1);
  (void)b.observe(feature(Vec3(1, 0, 0), Point3(-4, 0, 1), 3), 0, true);
  b.add_pose({1, 0, true, RigidTransform::identity()});

  const auto u = merge_maps(b, a, RigidTransform::identity());
  CHECK(u.landmarks().size() == 3);
  CHECK(u.trajectory().size() == 2);

  const auto self = merge_maps(a, a, RigidTransform::identity());
  REQUIRE(self.landmarks().size() == a.landmarks().size());
  for (const auto& [id, lm] : a.landmarks()) {
    const auto& m = self.landmark(id);
    CHECK(m.plane.n == lm.plane.n);
    CHECK(m.plane.d == lm.plane.d);
    CHECK(m.support == lm.support);
  }

  // current map expressed in a frame offset by T; mapping back through T aligns it
  const auto T = RigidTransform::yaw(0.7, Vec3(1.5, -2.0, 0.0));
  const auto Tinv = T.inverse();
  LandmarkMap c(LandmarkConfig{}, 2);
  for (const auto& [id, lm] : a.landmarks()) {
    WorldFeature f;
    f.plane = floorplan::geometry::transform_plane(lm.plane, Tinv);
    for (const auto& p : lm.support) f.support.push_back(Tinv.apply(p));
    (void)c.observe(f, 0, true);
  }
  const auto merged = merge_maps(c, a, T);
  REQUIRE(merged.landmarks().size() == a.landmarks().size());
  for (const auto& [id, lm] : a.landmarks()) {
    const auto& m = merged.landmark(id);
    CHECK((m.plane.n - lm.plane.n).norm() < 1e-6);
    CHECK(std::abs(m.plane.d - lm.plane.d) < 1e-6);
  }
}

TEST_CASE("snapshot examples") {
  LandmarkMap empty;
  const auto s0 = empty.snapshot();
  CHECK(s0->landmarks.empty());
  CHECK(s0->epoch == 1);
  CHECK(empty.snapshot()->epoch == 2);

  std::map<int, PlaneLandmark> lms;
  for (int i = 0; i < 5; ++i) {
    lms[i] = landmark_with(tilted(20.0 * i), Point3(i, 0, 0), 40, 5,
                           i < 2 ? LandmarkState::kValid : LandmarkState::kInvalid);
    lms[i].id = i;
  }
  auto map = LandmarkMap::restore({}, 0, lms, {}, 5, 0);
  const auto snap = map.snapshot();
  CHECK(snap->landmarks.size() == 2);
  const auto before = snap->landmarks[0].support;
  map.demote(0);
  (void)map.observe(feature(snap->landmarks[0].plane.n, snap->landmarks[0].support[0], 9), 50, true);
  map.add_pose({0, 50, true, RigidTransform::identity()});
  CHECK(snap->landmarks[0].support == before);
  CHECK(snap->trajectory.empty());
}

TEST_CASE("support is capped") {
  LandmarkConfig cfg;
  cfg.max_support = 100;
  LandmarkMap map(cfg);
  const Vec3 n(1, 0, 0);
  int id = -1;
  for (int k = 0; k < 5; ++k) id = *map.observe(feature(n, Point3(2, 0, 1), 10 + k, 60), 5 * k, true);
  CHECK(map.landmark(id).support.size() == 100);
}

TEST_CASE("map JSON round trip") {
  auto map = observed(40, 6);
  (void)map.observe(feature(Vec3(0, 1, 0), Point3(0, 3, 1), 4), 41, true);
  map.add_pose({0, 0, true, RigidTransform::yaw(0.3, Vec3(1, 2, 0))});
  const auto j = map_to_json(map);
  const auto back = map_from_json(j, {});
  CHECK(map_to_json(back) == j);
  CHECK(back.landmarks().size() == map.landmarks().size());
  CHECK(back.valid_count() == 1);
  CHECK(j.dump() == map_to_json(back).dump());

  auto bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS((void)map_from_json(bad, {}), SchemaVersionMismatch);
}
