#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "floorplan/floorplan_opt.hpp"

using namespace floorplan::opt;
using floorplan::geometry::deg2rad;
using floorplan::geometry::line_angle;
using floorplan::geometry::PlaneCartesian;
using floorplan::geometry::Point3;
using floorplan::geometry::point_segment_distance;
using floorplan::geometry::Vec2;
using floorplan::geometry::Vec3;
using floorplan::landmarks::LandmarkState;
using floorplan::landmarks::MapSnapshot;
using floorplan::landmarks::PlaneLandmark;

namespace {

std::vector<Point2> line_points(const Point2& a, const Point2& b, double spacing, double sigma,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const Vec2 d = (b - a).normalized();
  const Vec2 n(-d.y(), d.x());
  const int count = std::max(2, static_cast<int>(std::round((b - a).norm() / spacing)) + 1);
  std::vector<Point2> pts;
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / (count - 1);
    pts.push_back(a + t * (b - a) + sigma * noise(rng) * n);
  }
  return pts;
}

WallSegment2D wall(const Point2& a, const Point2& b, double spacing = 0.05, double sigma = 0.0,
                   std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  WallSegment2D w;
  w.seg = {a, b};
  w.support2d = line_points(a, b, spacing, sigma, rng);
  return w;
}

PlaneLandmark vertical_landmark(const Point2& a, const Point2& b, int id, double spacing = 0.05) {
  PlaneLandmark lm;
  lm.id = id;
  const Vec2 d = (b - a).normalized();
  lm.plane = PlaneCartesian::from_point_normal(Point3(a.x(), a.y(), 0), Vec3(-d.y(), d.x(), 0))
                 .canonical();
  std::mt19937_64 rng(id + 7);
  for (const auto& p : line_points(a, b, spacing, 0.0, rng)) {
    for (double z : {0.3, 1.0, 1.7}) lm.support.emplace_back(p.x(), p.y(), z);
  }
  lm.state = LandmarkState::kValid;
  return lm;
}

bool near(const Point2& p, const Point2& q, double tol = 1e-6) { return (p - q).norm() <= tol; }

bool same_segment(const Segment2& s, const Point2& a, const Point2& b, double tol = 1e-6) {
  return (near(s.a, a, tol) && near(s.b, b, tol)) || (near(s.a, b, tol) && near(s.b, a, tol));
}

int intersection_vertices(const Arrangement& arr) {
  return static_cast<int>(std::count_if(arr.vertices.begin(), arr.vertices.end(),
                                        [](const auto& v) { return v.incident.size() > 1; }));
}

// Exhaustive reference: feasibility from the degree rules, energies from the
// definitions, each recomputed here without the library's helpers.
struct BruteResult {
  bool feasible = false;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> arg;
};

BruteResult brute_force(const SelectionProblem& prob) {
  const auto& a = prob.arrangement;
  const auto& cfg = prob.cfg;
  const int n = static_cast<int>(a.candidates.size());
  std::vector<double> f(n, 0.0), uncov(n, 1.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& c = a.candidates[i];
    total += static_cast<double>(c.support2d.size());
    std::vector<double> t;
    const double len = c.seg.length();
    for (const auto& p : c.support2d) {
      const double d = point_segment_distance(p, c.seg);
      if (d < prob.eps_f) f[i] += 1.0 - d / prob.eps_f;
      const double s = (p - c.seg.a).dot(c.seg.b - c.seg.a) / (len * len);
      t.push_back(std::clamp(s, 0.0, 1.0) * len);
    }
    std::sort(t.begin(), t.end());
    double cov = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) {
      if (t[k] - t[k - 1] < prob.eps_c) cov += t[k] - t[k - 1];
    }
    uncov[i] = 1.0 - cov / len;
  }
  const double tol = deg2rad(cfg.collinear_tol_deg);
  auto bent = [&](int i, int j) {
    return line_angle(a.candidates[i].seg.direction(), a.candidates[j].seg.direction()) > tol;
  };
  int pair_count = 0;
  for (const auto& v : a.vertices) {
    for (std::size_t x = 0; x < v.incident.size(); ++x)
      for (std::size_t y = x + 1; y < v.incident.size(); ++y) pair_count += bent(v.incident[x], v.incident[y]);
  }

  BruteResult r;
  std::vector<std::uint8_t> sel(n);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    for (int i = 0; i < n; ++i) sel[i] = (mask >> i) & 1u;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) ok = !(cfg.use_trajectory && sel[i] && a.candidates[i].crossed_by_trajectory);
    int sharp_vertices = 0, sharp_pairs = 0;
    for (const auto& v : a.vertices) {
      if (!ok) break;
      int deg = 0, crossed = 0;
      for (int i : v.incident) {
        deg += sel[i];
        crossed += cfg.use_trajectory && a.candidates[i].crossed_by_trajectory;
      }
      if (crossed == 0) ok = deg != 1 && deg <= 4;
      else if (crossed <= 4) ok = deg <= 4 - crossed;
      int here = 0;
      for (std::size_t x = 0; x < v.incident.size(); ++x)
        for (std::size_t y = x + 1; y < v.incident.size(); ++y)
          here += sel[v.incident[x]] && sel[v.incident[y]] && bent(v.incident[x], v.incident[y]);
      sharp_pairs += here;
      sharp_vertices += here > 0;
    }
    if (!ok) continue;
    double fs = 0.0, cs = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!sel[i]) continue;
      fs += f[i];
      cs += uncov[i];
    }
    const double ef = total > 0 ? 1.0 - fs / total : 1.0;
    const double ec = n > 0 ? cs / n : 0.0;
    double em = 0.0;
    if (cfg.sharp_per_pair) em = pair_count ? static_cast<double>(sharp_pairs) / pair_count : 0.0;
    else em = a.vertices.empty() ? 0.0 : static_cast<double>(sharp_vertices) / a.vertices.size();
    const double e = cfg.lambda_f * ef + cfg.lambda_c * ec + cfg.lambda_m * em;
    if (e < r.best - 1e-12) {
      r.best = e;
      r.arg = sel;
    }
    r.feasible = true;
  }
  return r;
}

double linearized(const SelectionProblem& prob, std::span<const std::uint8_t> sel) {
  const auto full = complete_assignment(prob, sel);
  double obj = prob.constant;
  for (int k = 0; k < prob.program.n; ++k) obj += prob.program.objective[k] * full[k];
  return obj;
}

// Random segments in a 6 m box; returns an arrangement with 1..max_n candidates.
Arrangement random_arrangement(std::mt19937_64& rng, const FloorplanConfig& cfg, int max_n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const int k = 2 + static_cast<int>(u(rng) * 3);
    std::vector<WallSegment2D> segs;
    for (int s = 0; s < k; ++s) {
      const Point2 c(1 + 4 * u(rng), 1 + 4 * u(rng));
      double ang = u(rng) * floorplan::geometry::kPi;
      if (u(rng) < 0.5) ang = std::round(ang / (floorplan::geometry::kPi / 2)) * floorplan::geometry::kPi / 2;
      const Vec2 d(std::cos(ang), std::sin(ang));
      const double half = 0.75 + 1.25 * u(rng);
      segs.push_back(wall(c - half * d, c + half * d, 0.05 + 0.2 * u(rng), 0.01, rng()));
    }
    std::vector<Polyline> traj;
    if (u(rng) < 0.5) traj.push_back({Point2(6 * u(rng), 6 * u(rng)), Point2(6 * u(rng), 6 * u(rng))});
    auto arr = build_arrangement(segs, traj, cfg);
    const int n = static_cast<int>(arr.candidates.size());
    if (n >= 1 && n <= max_n) return arr;
  }
}

// Rectangle 0..w x 0..h; bottom wall has a door over [door_lo, door_hi].
std::vector<WallSegment2D> room_with_door(double w, double h, double door_lo, double door_hi,
                                          std::uint64_t seed) {
  return {wall({0, 0}, {door_lo, 0}, 0.05, 0.005, seed), wall({door_hi, 0}, {w, 0}, 0.05, 0.005, seed + 1),
          wall({w, 0}, {w, h}, 0.05, 0.005, seed + 2), wall({w, h}, {0, h}, 0.05, 0.005, seed + 3),
          wall({0, h}, {0, 0}, 0.05, 0.005, seed + 4)};
}

}  // namespace

TEST_CASE("select_wall_landmarks examples") {
  MapSnapshot snap;
  PlaneLandmark w;
  w.id = 0;
  w.plane = {Vec3(1, 0, 0), -2};
  w.state = LandmarkState::kValid;
  auto floor = w;
  floor.id = 1;
  floor.plane = {Vec3(0, 0, 1), 0};
  auto tilted = w;
  tilted.id = 2;
  tilted.plane = {Vec3(std::sqrt(1 - 0.09), 0, 0.3), 0};
  auto near_vertical = w;
  near_vertical.id = 3;
  near_vertical.plane = {Vec3(std::sqrt(1 - 0.17 * 0.17), 0, 0.17), 0};
  snap.landmarks = {w, floor, tilted, near_vertical};
  const auto sel = select_wall_landmarks(snap, 10.0);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0].id == 0);
  CHECK(sel[1].id == 3);
}

TEST_CASE("project_and_fit examples") {
  FloorplanConfig cfg;
  PlaneLandmark lm;
  lm.plane = {Vec3(1, 0, 0), -2};
  for (int k = 0; k <= 30; ++k) lm.support.emplace_back(2.0, 0.1 * k, 0.2 + 0.05 * (k % 7));
  const auto s = project_and_fit(lm, cfg);
  CHECK(same_segment(s.seg, {2, 0}, {2, 3}, 1e-9));
  CHECK(s.support2d.size() == 31);

  lm.support = {Point3(1, 1, 0.5), Point3(2, 2, 2.0)};
  lm.plane = PlaneCartesian::from_point_normal(Point3(1, 1, 0), Vec3(1, -1, 0).normalized());
  const auto two = project_and_fit(lm, cfg);
  CHECK(same_segment(two.seg, {1, 1}, {2, 2}, 1e-9));

  lm.plane = {Vec3(1, 0, 0), -2};
  lm.support = {Point3(2, 0, 0), Point3(2, 0.05, 1)};
  CHECK_THROWS_AS((void)project_and_fit(lm, cfg), DegenerateExtent);
}

TEST_CASE("split_at_gaps separates a doorway") {
  auto a = wall({0, 0}, {2, 0});
  const auto b = wall({3, 0}, {5, 0});
  a.support2d.insert(a.support2d.end(), b.support2d.begin(), b.support2d.end());
  a.seg = {{0, 0}, {5, 0}};
  const auto pieces = split_at_gaps(a, 0.5, 0.2);
  REQUIRE(pieces.size() == 2);
  CHECK(same_segment(pieces[0].seg, {0, 0}, {2, 0}));
  CHECK(same_segment(pieces[1].seg, {3, 0}, {5, 0}));
  CHECK(pieces[0].support2d.size() + pieces[1].support2d.size() == a.support2d.size());
  CHECK(split_at_gaps(a, 1.5, 0.2).size() == 1);
}

TEST_CASE("regularize examples") {
  FloorplanConfig cfg;
  // Segments [0,5] and [3.5,9] on y = 0; `over` points of each support lie in the overlap.
  auto half = [](double lo, double hi, int over, double seg_lo, double seg_hi) {
    WallSegment2D w;
    w.seg = {{seg_lo, 0}, {seg_hi, 0}};
    for (int k = 0; k < 100 - over; ++k) w.support2d.emplace_back(lo + (hi - lo) * k / (99.0 - over), 0.0);
    for (int k = 0; k < over; ++k) w.support2d.emplace_back(3.6 + 1.3 * k / over, 0.0);
    return w;
  };
  auto merged = regularize({half(0.0, 3.4, 15, 0, 5), half(5.1, 9.0, 15, 3.5, 9)}, cfg);
  REQUIRE(merged.size() == 1);
  CHECK(same_segment(merged[0].seg, {0, 0}, {9, 0}, 1e-9));
  CHECK(merged[0].support2d.size() == 200);

  // 10 shared points is not more than n_r = 10.
  CHECK(regularize({half(0.0, 3.4, 5, 0, 5), half(5.1, 9.0, 5, 3.5, 9)}, cfg).size() == 2);
  CHECK(regularize({half(0.0, 3.4, 6, 0, 5), half(5.1, 9.0, 5, 3.5, 9)}, cfg).size() == 1);

  // 45 degrees with plenty of points near the crossing.
  const auto h = wall({0, 0}, {4, 0});
  const auto d = wall({1, -1}, {3, 1});
  CHECK(regularize({h, d}, cfg).size() == 2);

  // 5 degrees, disjoint supports.
  const auto far = wall({6, 0.5}, {10, 0.5 + 4 * std::tan(deg2rad(5))});
  CHECK(regularize({h, far}, cfg).size() == 2);
}

TEST_CASE("regularize reaches a fixed point") {
  FloorplanConfig cfg;
  std::vector<WallSegment2D> segs{wall({0, 0}, {3, 0}), wall({2, 0.01}, {6, 0.01}),
                                  wall({5, 0}, {9, 0}), wall({0, 0}, {0, 4})};
  const auto once = regularize(segs, cfg);
  CHECK(once.size() == 2);
  CHECK(regularize(once, cfg).size() == once.size());
}

TEST_CASE("build_arrangement examples") {
  FloorplanConfig cfg;
  const auto perp = build_arrangement({wall({0, 0}, {2, 0}), wall({2.5, 0.5}, {2.5, 2.5})}, {}, cfg);
  CHECK(perp.candidates.size() == 4);
  CHECK(intersection_vertices(perp) == 1);

  const auto par = build_arrangement({wall({0, 0}, {2, 0}), wall({0, 1}, {2, 1})}, {}, cfg);
  CHECK(par.candidates.size() == 2);
  CHECK(intersection_vertices(par) == 0);

  const auto door = build_arrangement({wall({0, 0}, {2, 0}), wall({3, 0}, {5, 0})},
                                      {{Point2(2.5, -1), Point2(2.5, 1)}}, cfg);
  int crossed = 0;
  for (const auto& c : door.candidates) {
    if (!c.crossed_by_trajectory) continue;
    ++crossed;
    CHECK(same_segment(c.seg, {2, 0}, {3, 0}));
    CHECK(c.support2d.empty());
  }
  CHECK(crossed == 1);
}

TEST_CASE("arrangement candidates partition support and share endpoints") {
  FloorplanConfig cfg;
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto arr = random_arrangement(rng, cfg, 60);
    for (std::size_t i = 0; i < arr.candidates.size(); ++i) {
      const auto& c = arr.candidates[i];
      CHECK(c.seg.length() > 0);
      for (int v : c.endpoints) {
        const auto& inc = arr.vertices[v].incident;
        CHECK(std::find(inc.begin(), inc.end(), static_cast<int>(i)) != inc.end());
      }
      CHECK((near(c.seg.a, arr.vertices[c.endpoints[0]].position) ||
             near(c.seg.a, arr.vertices[c.endpoints[1]].position)));
    }
    for (std::size_t i = 0; i < arr.vertices.size(); ++i) {
      for (std::size_t j = i + 1; j < arr.vertices.size(); ++j) {
        CHECK((arr.vertices[i].position - arr.vertices[j].position).norm() > 1e-6);
      }
    }
  }
}

TEST_CASE("fitting and coverage examples") {
  CandidateSegment c;
  c.seg = {{0, 0}, {2, 0}};
  const double eps = 0.1;
  c.support2d = {Point2(0.5, eps / 2), Point2(1.0, 2 * eps)};
  CHECK(fitting_score(c, eps) == doctest::Approx(0.5).epsilon(1e-12));

  c.support2d = {Point2(0, 0), Point2(0.5, 0), Point2(1.0, 0)};
  CHECK(covered_length(c, 0.6) == doctest::Approx(1.0).epsilon(1e-12));

  c.support2d.clear();
  CHECK(covered_length(c, 0.6) == 0.0);
  for (int k = 0; k <= 200; ++k) c.support2d.emplace_back(0.01 * k, 0.0);
  CHECK(covered_length(c, 0.05) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("energy assembly examples") {
  FloorplanConfig cfg;
  cfg.eps_f = 0.1;
  cfg.eps_c = 0.6;
  Arrangement arr;
  CandidateSegment c;
  c.seg = {{0, 0}, {2, 0}};
  c.endpoints = {0, 1};
  c.support2d = {Point2(0, 0), Point2(0.5, 0), Point2(1.0, 0)};
  arr.candidates = {c};
  arr.vertices = {{0, {0, 0}, {0}}, {1, {2, 0}, {0}}};
  const auto prob = build_problem(arr, cfg);
  const std::vector<std::uint8_t> on{1}, off{0};
  const auto e = evaluate_energies(prob, on);
  CHECK(e.fitting == doctest::Approx(0.0));
  CHECK(e.coverage == doctest::Approx(0.5));
  CHECK(e.complexity == 0.0);
  const auto none = evaluate_energies(prob, off);
  CHECK(none.fitting == 1.0);
  CHECK(none.coverage == 0.0);

  auto empty = arr;
  empty.candidates[0].support2d.clear();
  CHECK(evaluate_energies(build_problem(empty, cfg), on).coverage == doctest::Approx(1.0));
}

TEST_CASE("sharpness examples") {
  Arrangement arr;
  CandidateSegment w, e, n;
  w.seg = {{-1, 0}, {0, 0}};
  e.seg = {{0, 0}, {1, 0}};
  n.seg = {{0, 0}, {0, 1}};
  arr.candidates = {w, e, n};
  arr.vertices = {{0, {0, 0}, {0, 1, 2}}};
  using Sel = std::vector<std::uint8_t>;
  CHECK_FALSE(is_sharp(arr, 0, Sel{1, 1, 0}, 5.0));
  CHECK(is_sharp(arr, 0, Sel{1, 0, 1}, 5.0));
  CHECK_FALSE(is_sharp(arr, 0, Sel{0, 0, 1}, 5.0));
  CHECK(is_sharp(arr, 0, Sel{1, 1, 1}, 5.0));
}

namespace {

// Whether the program admits the given candidate selection (aux variables free).
bool admits(const SelectionProblem& prob, const std::vector<std::uint8_t>& x) {
  auto p = prob.program;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p.add_row({{static_cast<int>(i), 1.0}}, floorplan::blp::Relation::kEq, x[i]);
  }
  return floorplan::blp::solve(p).status == floorplan::blp::Status::kOptimal;
}

Arrangement star(int arms, std::vector<bool> crossed) {
  Arrangement arr;
  arr.vertices = {{0, {0, 0}, {}}};
  for (int k = 0; k < arms; ++k) {
    const double ang = 2 * floorplan::geometry::kPi * k / arms;
    CandidateSegment c;
    c.seg = {{0, 0}, {std::cos(ang), std::sin(ang)}};
    c.endpoints = {0, -1};
    c.crossed_by_trajectory = crossed[k];
    arr.candidates.push_back(c);
    arr.vertices[0].incident.push_back(k);
  }
  return arr;
}

}  // namespace

TEST_CASE("constraint examples") {
  FloorplanConfig cfg;
  cfg.eps_f = 0.1;
  cfg.eps_c = 0.1;
  const auto free4 = build_problem(star(4, {false, false, false, false}), cfg);
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<std::uint8_t> x(4);
    int deg = 0;
    for (int i = 0; i < 4; ++i) deg += x[i] = (mask >> i) & 1;
    CHECK(admits(free4, x) == (deg != 1));
  }

  const auto one_crossed = build_problem(star(5, {true, false, false, false, false}), cfg);
  for (int mask = 0; mask < 32; ++mask) {
    std::vector<std::uint8_t> x(5);
    int deg = 0;
    for (int i = 0; i < 5; ++i) deg += x[i] = (mask >> i) & 1;
    CHECK(admits(one_crossed, x) == (x[0] == 0 && deg <= 3));
  }

  auto no_traj = cfg;
  no_traj.use_trajectory = false;
  CHECK(admits(build_problem(star(4, {true, false, false, false}), no_traj), {1, 1, 0, 0}));

  const auto overloaded = build_problem(star(6, {true, true, true, true, true, false}), cfg);
  REQUIRE(overloaded.warnings.size() == 1);
  CHECK(overloaded.warnings[0].crossed == 5);
  CHECK(admits(overloaded, {0, 0, 0, 0, 0, 1}));
}

TEST_CASE("rectangular room with spurious extensions matches enumeration") {
  FloorplanConfig cfg;
  Arrangement arr;
  const std::vector<Point2> corners{{0, 0}, {4, 0}, {4, 3}, {0, 3}};
  const std::vector<Point2> tips{{-1, 0}, {5, 0}, {4, 4}, {0, 4}};
  for (int k = 0; k < 4; ++k) arr.vertices.push_back({k, corners[k], {}});
  for (int k = 0; k < 4; ++k) arr.vertices.push_back({4 + k, tips[k], {}});
  std::mt19937_64 rng(3);
  auto add = [&](int va, int vb, double spacing) {
    CandidateSegment c;
    c.seg = {arr.vertices[va].position, arr.vertices[vb].position};
    c.endpoints = {va, vb};
    if (spacing > 0) c.support2d = line_points(c.seg.a, c.seg.b, spacing, 0.005, rng);
    const int id = static_cast<int>(arr.candidates.size());
    arr.vertices[va].incident.push_back(id);
    arr.vertices[vb].incident.push_back(id);
    arr.candidates.push_back(std::move(c));
  };
  for (int k = 0; k < 4; ++k) add(k, (k + 1) % 4, 0.05);
  add(0, 4, 0.0);
  add(1, 5, 0.0);
  add(2, 6, 0.4);
  add(3, 7, 0.0);

  const auto prob = build_problem(arr, cfg);
  const auto ref = brute_force(prob);
  const auto model = assemble_and_solve(prob);
  REQUIRE(ref.feasible);
  CHECK(model.objective == doctest::Approx(ref.best).epsilon(1e-12));
  CHECK(model.selected == std::vector<int>{0, 1, 2, 3});
  CHECK(model.walls.size() == 4);
  CHECK(model.vertices.size() == 4);
}

TEST_CASE("solver optimum equals enumeration on small arrangements") {
  std::mt19937_64 rng(2024);
  FloorplanConfig cfg;
  for (int rep = 0; rep < 100; ++rep) {
    cfg.sharp_per_pair = rep % 10 == 9;
    const auto prob = build_problem(random_arrangement(rng, cfg, 18), cfg);
    const auto ref = brute_force(prob);
    CAPTURE(rep);
    REQUIRE(ref.feasible);
    const auto model = assemble_and_solve(prob);
    CHECK(model.objective == doctest::Approx(ref.best).epsilon(1e-9));

    std::vector<std::uint8_t> sel(prob.arrangement.candidates.size(), 0);
    for (int i : model.selected) {
      sel[i] = 1;
      CHECK_FALSE(prob.arrangement.candidates[i].crossed_by_trajectory);
    }
    CHECK(linearized(prob, sel) == doctest::Approx(model.objective).epsilon(1e-9));
    CHECK(floorplan::blp::check_feasible(prob.program, complete_assignment(prob, sel)).feasible);
  }
}

TEST_CASE("energy terms match the linearized objective for random selections") {
  std::mt19937_64 rng(77);
  FloorplanConfig cfg;
  for (int rep = 0; rep < 50; ++rep) {
    cfg.sharp_per_pair = rep % 5 == 4;
    const auto prob = build_problem(random_arrangement(rng, cfg, 80), cfg);
    std::vector<std::uint8_t> sel(prob.arrangement.candidates.size());
    for (auto& s : sel) s = rng() & 1u;
    const auto e = evaluate_energies(prob, sel);
    for (double t : {e.fitting, e.coverage, e.complexity}) {
      CHECK(t >= 0.0);
      CHECK(t <= 1.0);
    }
    CHECK(std::abs(weighted_energy(e, cfg) - linearized(prob, sel)) <= 1e-9);
  }
}

TEST_CASE("zero candidates give the bare fitting weight") {
  FloorplanConfig cfg;
  const auto prob = build_problem({}, cfg);
  const auto model = assemble_and_solve(prob);
  CHECK(model.walls.empty());
  CHECK(model.objective == doctest::Approx(cfg.lambda_f));
  CHECK(model.energies.fitting == 1.0);
}

TEST_CASE("doorway crossed by the trajectory stays open") {
  FloorplanConfig cfg;
  const Polyline path{{2.5, -2.0}, {2.5, 2.0}, {1.0, 3.0}};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto arr = build_arrangement(room_with_door(5, 4, 2, 3, seed * 10), {path}, cfg);
    const auto model = assemble_and_solve(build_problem(arr, cfg));
    for (int i : model.selected) CHECK_FALSE(arr.candidates[i].crossed_by_trajectory);
    REQUIRE(model.openings.size() == 1);
    CHECK(same_segment(model.openings[0], {2, 0}, {3, 0}, 0.02));
    // Every room wall apart from the door is present.
    double length = 0.0;
    for (const auto& s : model.wall_segments()) length += s.length();
    CHECK(length == doctest::Approx(17.0).epsilon(0.01));

    auto closed = cfg;
    closed.use_trajectory = false;
    const auto shut = assemble_and_solve(build_problem(build_arrangement(room_with_door(5, 4, 2, 3, seed * 10), {path}, closed), closed));
    double shut_length = 0.0;
    for (const auto& s : shut.wall_segments()) shut_length += s.length();
    CHECK(shut_length == doctest::Approx(18.0).epsilon(0.01));
  }
}

TEST_CASE("infeasible selection reports conflicting rows") {
  FloorplanConfig cfg;
  auto prob = build_problem(star(3, {false, false, false}), cfg);
  prob.program.add_row({{0, 1.0}}, floorplan::blp::Relation::kEq, 1.0, "force_a");
  prob.program.add_row({{1, 1.0}, {2, 1.0}}, floorplan::blp::Relation::kEq, 0.0, "drop_bc");
  try {
    (void)assemble_and_solve(prob);
    FAIL("expected Infeasible");
  } catch (const Infeasible& e) {
    auto rows = e.conflicting_rows;
    std::sort(rows.begin(), rows.end());
    // a alone would have to turn at the hub, but no pair is left to make it sharp.
    CHECK(rows == std::vector<std::string>{"and_b_v0_0_1", "and_b_v0_0_2", "and_b_v0_1_2", "drop_bc", "force_a",
                                           "or_v0", "turn_v0_0"});
  }
}

TEST_CASE("reconstruct recovers a room from wall landmarks") {
  MapSnapshot snap;
  snap.epoch = 9;
  snap.landmarks = {vertical_landmark({0, 0}, {6, 0}, 0), vertical_landmark({6, 0}, {6, 4}, 1),
                    vertical_landmark({6, 4}, {0, 4}, 2), vertical_landmark({0, 4}, {0, 0}, 3)};
  PlaneLandmark floor;
  floor.id = 4;
  floor.plane = {Vec3(0, 0, 1), 0};
  floor.state = LandmarkState::kValid;
  for (int k = 0; k < 50; ++k) floor.support.emplace_back(0.1 * k, 1.0, 0.0);
  snap.landmarks.push_back(floor);
  for (int k = 0; k < 10; ++k) {
    floorplan::landmarks::TrajectoryPose p;
    p.frame = k;
    p.keyframe = k % 5 == 0 || k == 9;
    p.T_wc.translation = Vec3(1 + 0.4 * k, 2, 1.2);
    snap.trajectory.push_back(p);
  }
  FloorplanConfig cfg;
  ReconstructionTimings t;
  const auto model = reconstruct(snap, cfg, &t);
  CHECK(model.epoch == 9);
  CHECK(t.candidates == 12);
  REQUIRE(model.walls.size() == 4);
  std::vector<Point2> expect{{0, 0}, {6, 0}, {6, 4}, {0, 4}};
  for (const auto& v : model.vertices) {
    CHECK(std::any_of(expect.begin(), expect.end(), [&](const Point2& e) { return near(v, e, 1e-6); }));
  }
  CHECK(model.trajectory.size() == 1);
  CHECK(model.trajectory[0].size() == 3);

  const auto again = reconstruct(snap, cfg);
  CHECK(floorplan_to_json(again).dump() == floorplan_to_json(model).dump());
}

TEST_CASE("floorplan json round trip and svg") {
  FloorplanConfig cfg;
  const Polyline path{{2.5, -2.0}, {2.5, 2.0}};
  auto model = assemble_and_solve(
      build_problem(build_arrangement(room_with_door(5, 4, 2, 3, 4), {path}, cfg), cfg));
  model.trajectory = {path};
  model.support = {Point2(0.5, 0.0), Point2(1.0, 0.0)};
  model.epoch = 3;
  const auto j = floorplan_to_json(model);
  const auto back = floorplan_from_json(nlohmann::json::parse(j.dump()));
  CHECK(floorplan_to_json(back).dump() == j.dump());
  CHECK(back.walls == model.walls);

  auto bad = j;
  bad["walls"].push_back({0, 999});
  CHECK_THROWS_AS((void)floorplan_from_json(bad), floorplan::Error);

  const auto svg = render_svg(model);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg == render_svg(back));
}

TEST_CASE("point_density matches a brute-force k-nearest search") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<Point2> pts;
    const int n = 20 + static_cast<int>(rng() % 300);
    for (int k = 0; k < n; ++k) pts.emplace_back(u(rng), rep % 2 ? u(rng) : 0.01 * u(rng));
    double ref = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<double> d;
      for (int j = 0; j < n; ++j)
        if (i != j) d.push_back((pts[i] - pts[j]).norm());
      std::sort(d.begin(), d.end());
      ref += std::accumulate(d.begin(), d.begin() + 10, 0.0) / 10.0;
    }
    CHECK(point_density(pts, 10) == doctest::Approx(ref / n).epsilon(1e-12));
  }
}
