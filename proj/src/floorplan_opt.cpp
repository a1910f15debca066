#include "floorplan/floorplan_opt.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace floorplan::opt {

using geometry::cross2;
using geometry::deg2rad;
using geometry::kGeomEps;
using geometry::line_angle;
using geometry::point_segment_distance;
using geometry::project_param;
using geometry::Vec2;
using landmarks::LandmarkState;
using landmarks::MapSnapshot;
using landmarks::PlaneLandmark;

namespace {

constexpr double kVertexTol = 1e-6;

Vec2 canonical_dir(Vec2 d) {
  if (d.x() < -kGeomEps || (std::abs(d.x()) <= kGeomEps && d.y() < 0.0)) d = -d;
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Segment on the line through `origin` along `dir` covering the projections of pts.
Segment2 span_segment(std::span<const Point2> pts, const Point2& origin, const Vec2& dir) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pts) {
    const double s = dir.dot(p - origin);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {origin + lo * dir, origin + hi * dir};
}

// Clips the parameter range [t0, t1] of p(t) = a + t (b - a) to the box.
void clip_to_box(const Point2& a, const Vec2& ab, const Point2& lo, const Point2& hi, double& t0,
                 double& t1) {
  for (int k = 0; k < 2; ++k) {
    if (std::abs(ab[k]) < 1e-15) continue;
    double ta = (lo[k] - a[k]) / ab[k];
    double tb = (hi[k] - a[k]) / ab[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
}

class VertexRegistry {
 public:
  int find_or_add(const Point2& p) {
    const auto cx = cell(p.x());
    const auto cy = cell(p.y());
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = grid_.find(key(cx + dx, cy + dy));
        if (it == grid_.end()) continue;
        for (int v : it->second) {
          if ((positions[v] - p).norm() <= kVertexTol) return v;
        }
      }
    }
    const int id = static_cast<int>(positions.size());
    positions.push_back(p);
    grid_[key(cx, cy)].push_back(id);
    return id;
  }

  std::vector<Point2> positions;

 private:
  static std::int64_t cell(double x) { return static_cast<std::int64_t>(std::floor(x / 1e-4)); }
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL) ^ static_cast<std::uint64_t>(y);
  }
  std::unordered_map<std::uint64_t, std::vector<int>> grid_;
};

}  // namespace

DegenerateExtent::DegenerateExtent(double span)
    : Error("wall segment extent " + std::to_string(span) + " m is below the minimum") {}

Infeasible::Infeasible(std::string msg, std::vector<std::string> rows)
    : Error(std::move(msg)), conflicting_rows(std::move(rows)) {}

std::vector<PlaneLandmark> select_wall_landmarks(const MapSnapshot& snapshot,
                                                 double vertical_tol_deg) {
  const double limit = std::sin(deg2rad(vertical_tol_deg));
  std::vector<PlaneLandmark> out;
  for (const auto& lm : snapshot.landmarks) {
    if (lm.state != LandmarkState::kValid) continue;
    if (std::abs(lm.plane.n.z()) <= limit) out.push_back(lm);
  }
  return out;
}

WallSegment2D project_and_fit(const PlaneLandmark& lm, const FloorplanConfig& cfg) {
  Vec2 n2(lm.plane.n.x(), lm.plane.n.y());
  if (lm.support.size() < 2 || n2.norm() < kGeomEps) throw DegenerateExtent(0.0);
  n2.normalize();
  const Vec2 dir = canonical_dir(Vec2(-n2.y(), n2.x()));

  const std::size_t stride =
      cfg.max_support_2d > 0 ? (lm.support.size() + cfg.max_support_2d - 1) / cfg.max_support_2d : 1;
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < lm.support.size(); i += stride) {
    pts.emplace_back(lm.support[i].x(), lm.support[i].y());
  }
  Point2 c = Point2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());

  WallSegment2D w;
  w.source_landmark = lm.id;
  for (const auto& p : pts) {
    if (std::abs(n2.dot(p - c)) <= cfg.line_gate) w.support2d.push_back(p);
  }
  if (w.support2d.size() < 2) throw DegenerateExtent(0.0);
  c.setZero();
  for (const auto& p : w.support2d) c += p;
  c /= static_cast<double>(w.support2d.size());
  w.seg = span_segment(w.support2d, c, dir);
  const double span = w.seg.length();
  if (span < cfg.min_extent) throw DegenerateExtent(span);
  return w;
}

std::vector<WallSegment2D> split_at_gaps(const WallSegment2D& s, double gap, double min_extent) {
  const Vec2 dir = s.seg.direction();
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < s.support2d.size(); ++i) {
    order.emplace_back(dir.dot(s.support2d[i] - s.seg.a), static_cast<int>(i));
  }
  std::sort(order.begin(), order.end());
  std::vector<WallSegment2D> out;
  std::size_t begin = 0;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    if (k < order.size() && order[k].first - order[k - 1].first <= gap) continue;
    const double lo = order[begin].first;
    const double hi = order[k - 1].first;
    if (hi - lo >= min_extent) {
      WallSegment2D piece;
      piece.source_landmark = s.source_landmark;
      piece.seg = {s.seg.a + lo * dir, s.seg.a + hi * dir};
      for (std::size_t q = begin; q < k; ++q) piece.support2d.push_back(s.support2d[order[q].second]);
      out.push_back(std::move(piece));
    }
    begin = k;
  }
  return out;
}

Segment2 fit_segment(std::span<const Point2> pts) {
  Point2 c = Point2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Vec2 dir = canonical_dir(es.eigenvectors().col(1).normalized());
  return span_segment(pts, c, dir);
}

std::vector<WallSegment2D> regularize(std::vector<WallSegment2D> segs, const FloorplanConfig& cfg) {
  const double max_angle = deg2rad(cfg.theta_r_deg);
  auto shared_close = [&](const WallSegment2D& a, const WallSegment2D& b) {
    std::size_t n = 0;
    for (const auto* s : {&a, &b}) {
      for (const auto& p : s->support2d) {
        n += point_segment_distance(p, a.seg) <= cfg.close_gate &&
             point_segment_distance(p, b.seg) <= cfg.close_gate;
      }
    }
    return n;
  };
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < segs.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < segs.size(); ++j) {
        if (line_angle(segs[i].seg.direction(), segs[j].seg.direction()) >= max_angle) continue;
        const double n_r =
            static_cast<double>(std::min(segs[i].support2d.size(), segs[j].support2d.size())) / 10.0;
        if (static_cast<double>(shared_close(segs[i], segs[j])) <= n_r) continue;
        auto& a = segs[i];
        a.support2d.insert(a.support2d.end(), segs[j].support2d.begin(), segs[j].support2d.end());
        a.source_landmark = std::min(a.source_landmark, segs[j].source_landmark);
        a.seg = fit_segment(a.support2d);
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(j));
        merged = true;
        break;
      }
    }
  }
  return segs;
}

Arrangement build_arrangement(const std::vector<WallSegment2D>& segs,
                              const std::vector<Polyline>& trajectory, const FloorplanConfig& cfg) {
  Arrangement arr;
  if (segs.empty()) return arr;

  Point2 lo = Point2::Constant(std::numeric_limits<double>::infinity());
  Point2 hi = -lo;
  for (const auto& s : segs) {
    for (const auto& p : {s.seg.a, s.seg.b}) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    for (const auto& p : s.support2d) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const double margin = cfg.bbox_inflate * std::max((hi - lo).maxCoeff(), 1.0);
  lo.array() -= margin;
  hi.array() += margin;

  const std::size_t n = segs.size();
  std::vector<Segment2> ext(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segs[i].seg;
    const double len = s.length();
    const double e = std::max(cfg.extension_min, cfg.extension_frac * len) / std::max(len, kGeomEps);
    double t0 = -e;
    double t1 = 1.0 + e;
    clip_to_box(s.a, s.b - s.a, lo, hi, t0, t1);
    ext[i] = {s.at(std::min(t0, 0.0)), s.at(std::max(t1, 1.0))};
  }

  // On a shared line, an extended end that lands within snap_tol of another
  // segment's end is moved onto it; otherwise the two ends leave a sliver
  // candidate between them. Original ends are preferred over extended ones.
  if (cfg.snap_tol > 0.0) {
    auto shares_line = [&](std::size_t i, std::size_t j) {
      try {
        (void)geometry::segment_intersection(ext[i], ext[j]);
      } catch (const geometry::CollinearOverlap&) {
        return true;
      }
      return false;
    };
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && shares_line(i, j)) pairs.emplace_back(i, j);
      }
    }
    std::vector<std::array<bool, 2>> snapped(n, {false, false});
    for (const bool to_original : {true, false}) {
      for (const auto& [i, j] : pairs) {
        for (int end = 0; end < 2; ++end) {
          Point2& e = end == 0 ? ext[i].a : ext[i].b;
          const Point2& own = end == 0 ? segs[i].seg.a : segs[i].seg.b;
          if (snapped[i][end] || (e - own).norm() <= kVertexTol) continue;
          const Segment2& target = to_original ? segs[j].seg : ext[j];
          for (const Point2& q : {target.a, target.b}) {
            if ((e - q).norm() <= cfg.snap_tol) {
              e = q;
              snapped[i][end] = true;
              break;
            }
          }
        }
      }
    }
  }

  VertexRegistry reg;
  std::vector<std::vector<int>> splits(n);
  for (std::size_t i = 0; i < n; ++i) {
    splits[i] = {reg.find_or_add(ext[i].a), reg.find_or_add(ext[i].b)};
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      try {
        if (const auto p = geometry::segment_intersection(ext[i], ext[j])) {
          const int v = reg.find_or_add(*p);
          splits[i].push_back(v);
          splits[j].push_back(v);
        }
      } catch (const geometry::CollinearOverlap&) {
        // Shared line: every end, extended or original, inside the common
        // span splits both, so their pieces there coincide and get merged.
        for (std::size_t from : {i, j}) {
          for (const auto& p : {ext[from].a, ext[from].b, segs[from].seg.a, segs[from].seg.b}) {
            if (point_segment_distance(p, ext[i]) <= kVertexTol && point_segment_distance(p, ext[j]) <= kVertexTol) {
              const int v = reg.find_or_add(p);
              splits[i].push_back(v);
              splits[j].push_back(v);
            }
          }
        }
      }
    }
  }

  std::map<std::pair<int, int>, int> by_ends;
  for (std::size_t i = 0; i < n; ++i) {
    auto& sp = splits[i];
    std::vector<std::pair<double, int>> ordered;
    for (int v : sp) ordered.emplace_back(project_param(reg.positions[v], ext[i]), v);
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end(),
                              [](const auto& a, const auto& b) { return a.second == b.second; }),
                  ordered.end());

    // Each support point goes to the piece whose parameter range holds it.
    std::vector<double> cuts;
    for (const auto& [t, v] : ordered) cuts.push_back(t);
    std::vector<std::vector<Point2>> pieces(cuts.size() > 1 ? cuts.size() - 1 : 0);
    const Segment2& own = segs[i].seg;
    auto inside_own = [&](std::size_t k) {
      const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
      return mid >= project_param(own.a, ext[i]) && mid <= project_param(own.b, ext[i]);
    };
    for (const auto& p : segs[i].support2d) {
      if (pieces.empty()) break;
      const double t = project_param(p, ext[i]);
      const auto at = std::upper_bound(cuts.begin(), cuts.end(), t);
      auto k = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
          at - cuts.begin() - 1, 0, static_cast<std::ptrdiff_t>(pieces.size()) - 1));
      // A point sitting on a cut belongs to the side that lies along the wall.
      if (t == cuts[k] && k > 0 && !inside_own(k) && inside_own(k - 1)) --k;
      pieces[k].push_back(p);
    }
    for (std::size_t k = 0; k + 1 < ordered.size(); ++k) {
      const int va = ordered[k].second;
      const int vb = ordered[k + 1].second;
      auto& support = pieces[k];
      if (va == vb) continue;
      const auto key = std::minmax(va, vb);
      const auto it = by_ends.find(key);
      if (it != by_ends.end()) {
        auto& dst = arr.candidates[it->second].support2d;
        dst.insert(dst.end(), support.begin(), support.end());
        continue;
      }
      CandidateSegment c;
      c.seg = {reg.positions[key.first], reg.positions[key.second]};
      c.endpoints = {key.first, key.second};
      c.support2d = std::move(support);
      by_ends.emplace(key, static_cast<int>(arr.candidates.size()));
      arr.candidates.push_back(std::move(c));
    }
  }

  // Keep only vertices that bound some candidate, renumbered in creation order.
  std::vector<int> remap(reg.positions.size(), -1);
  for (const auto& c : arr.candidates) {
    remap[c.endpoints[0]] = 0;
    remap[c.endpoints[1]] = 0;
  }
  for (std::size_t v = 0; v < remap.size(); ++v) {
    if (remap[v] < 0) continue;
    remap[v] = static_cast<int>(arr.vertices.size());
    arr.vertices.push_back({remap[v], reg.positions[v], {}});
  }
  for (std::size_t ci = 0; ci < arr.candidates.size(); ++ci) {
    auto& c = arr.candidates[ci];
    for (int& e : c.endpoints) {
      e = remap[e];
      arr.vertices[e].incident.push_back(static_cast<int>(ci));
    }
    for (const auto& line : trajectory) {
      for (std::size_t k = 0; k + 1 < line.size() && !c.crossed_by_trajectory; ++k) {
        c.crossed_by_trajectory = geometry::segments_touch(c.seg, {line[k], line[k + 1]});
      }
    }
  }
  return arr;
}

double fitting_score(const CandidateSegment& c, double eps_f) {
  double f = 0.0;
  for (const auto& p : c.support2d) {
    const double d = point_segment_distance(p, c.seg);
    if (d < eps_f) f += 1.0 - d / eps_f;
  }
  return f;
}

double covered_length(const CandidateSegment& c, double eps_c) {
  const double len = c.seg.length();
  std::vector<double> t;
  t.reserve(c.support2d.size());
  for (const auto& p : c.support2d) t.push_back(std::clamp(project_param(p, c.seg), 0.0, 1.0) * len);
  std::sort(t.begin(), t.end());
  double covered = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double g = t[k] - t[k - 1];
    if (g < eps_c) covered += g;
  }
  return covered;
}

double average_support_distance(const Arrangement& arr) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& c : arr.candidates) {
    for (const auto& p : c.support2d) sum += point_segment_distance(p, c.seg);
    count += c.support2d.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double point_density(std::span<const Point2> pts, int k) {
  const std::size_t n = pts.size();
  if (n < 2 || k < 1) return 0.0;
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  Point2 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double area = std::max((hi - lo).prod(), 1e-12);
  const double cell = std::max(std::sqrt(area * static_cast<double>(kk + 1) / static_cast<double>(n)),
                               std::max((hi - lo).maxCoeff() / 4096.0, 1e-9));
  const auto nx = static_cast<std::int64_t>((hi.x() - lo.x()) / cell) + 1;
  const auto ny = static_cast<std::int64_t>((hi.y() - lo.y()) / cell) + 1;
  auto cell_of = [&](const Point2& p) {
    return std::pair<std::int64_t, std::int64_t>{static_cast<std::int64_t>((p.x() - lo.x()) / cell),
                                                 static_cast<std::int64_t>((p.y() - lo.y()) / cell)};
  };
  std::unordered_map<std::int64_t, std::vector<int>> grid;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [cx, cy] = cell_of(pts[i]);
    grid[cx * ny + cy].push_back(static_cast<int>(i));
  }

  double total = 0.0;
  std::vector<double> d2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [cx, cy] = cell_of(pts[i]);
    d2.clear();
    for (std::int64_t r = 0;; ++r) {
      // ring r around the home cell
      for (std::int64_t x = cx - r; x <= cx + r; ++x) {
        for (std::int64_t y = cy - r; y <= cy + r; ++y) {
          if (std::max(std::abs(x - cx), std::abs(y - cy)) != r) continue;
          if (x < 0 || y < 0 || x >= nx || y >= ny) continue;
          const auto it = grid.find(x * ny + y);
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (static_cast<std::size_t>(j) != i) d2.push_back((pts[j] - pts[i]).squaredNorm());
          }
        }
      }
      if (d2.size() >= kk) {
        std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(kk - 1), d2.end());
        // every point outside the searched rings is at least r * cell away
        const double reach = static_cast<double>(r) * cell;
        if (d2[kk - 1] <= reach * reach) break;
      }
      if (r > nx + ny) break;
    }
    std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(kk), d2.end());
    double mean = 0.0;
    for (std::size_t q = 0; q < kk; ++q) mean += std::sqrt(d2[q]);
    total += mean / static_cast<double>(kk);
  }
  return total / static_cast<double>(n);
}

bool is_sharp(const Arrangement& arr, int v, std::span<const std::uint8_t> selected,
              double collinear_tol_deg) {
  const auto& inc = arr.vertices[v].incident;
  const double tol = deg2rad(collinear_tol_deg);
  for (std::size_t a = 0; a < inc.size(); ++a) {
    if (!selected[inc[a]]) continue;
    for (std::size_t b = a + 1; b < inc.size(); ++b) {
      if (!selected[inc[b]]) continue;
      if (line_angle(arr.candidates[inc[a]].seg.direction(), arr.candidates[inc[b]].seg.direction()) >
          tol) {
        return true;
      }
    }
  }
  return false;
}

SelectionProblem build_problem(Arrangement arr, const FloorplanConfig& cfg) {
  SelectionProblem prob;
  prob.cfg = cfg;
  prob.arrangement = std::move(arr);
  const auto& a = prob.arrangement;
  const int n = static_cast<int>(a.candidates.size());
  const int m = static_cast<int>(a.vertices.size());

  prob.eps_f = cfg.eps_f > 0.0 ? cfg.eps_f : std::max(average_support_distance(a), 1e-6);
  if (cfg.eps_c > 0.0) {
    prob.eps_c = cfg.eps_c;
  } else {
    std::vector<Point2> all;
    for (const auto& c : a.candidates) all.insert(all.end(), c.support2d.begin(), c.support2d.end());
    prob.eps_c = cfg.eps_c_factor * point_density(all, cfg.density_k);
  }
  for (const auto& c : a.candidates) {
    prob.total_support += static_cast<double>(c.support2d.size());
    prob.fit.push_back(fitting_score(c, prob.eps_f));
    prob.uncovered.push_back(1.0 - covered_length(c, prob.eps_c) / c.seg.length());
  }

  auto& p = prob.program;
  for (int i = 0; i < n; ++i) {
    double cost = 0.0;
    if (prob.total_support > 0.0) cost -= cfg.lambda_f * prob.fit[i] / prob.total_support;
    cost += cfg.lambda_c * prob.uncovered[i] / n;
    p.add_var(cost, "x" + std::to_string(i));
  }
  prob.constant = cfg.lambda_f;

  if (cfg.use_trajectory) {
    std::vector<blp::Term> crossed;
    for (int i = 0; i < n; ++i) {
      if (a.candidates[i].crossed_by_trajectory) crossed.push_back({i, 1.0});
    }
    if (!crossed.empty()) p.add_row(std::move(crossed), blp::Relation::kEq, 0.0, "trajectory");
  }

  // Non-collinear incident pairs, per vertex.
  const double tol = deg2rad(cfg.collinear_tol_deg);
  std::vector<std::vector<std::pair<int, int>>> pairs(m);
  int pair_total = 0;
  for (int v = 0; v < m; ++v) {
    const auto& inc = a.vertices[v].incident;
    for (std::size_t x = 0; x < inc.size(); ++x) {
      for (std::size_t y = x + 1; y < inc.size(); ++y) {
        if (line_angle(a.candidates[inc[x]].seg.direction(), a.candidates[inc[y]].seg.direction()) >
            tol) {
          pairs[v].emplace_back(inc[x], inc[y]);
        }
      }
    }
    pair_total += static_cast<int>(pairs[v].size());
  }
  prob.complexity_norm = cfg.sharp_per_pair ? pair_total : m;

  prob.degree_var.assign(m, -1);
  prob.sharp_var.assign(m, -1);
  for (int v = 0; v < m; ++v) {
    const auto& inc = a.vertices[v].incident;
    const std::string tag = "v" + std::to_string(v);
    int n_c = 0;
    if (cfg.use_trajectory) {
      for (int i : inc) n_c += a.candidates[i].crossed_by_trajectory;
    }
    std::vector<blp::Term> deg;
    for (int i : inc) deg.push_back({i, 1.0});
    if (n_c == 0) {
      const int z = p.add_var(0.0, "z" + std::to_string(v));
      prob.degree_var[v] = z;
      auto lo = deg;
      lo.push_back({z, -2.0});
      auto hi = deg;
      hi.push_back({z, -4.0});
      p.add_row(std::move(lo), blp::Relation::kGe, 0.0, "deg_lo_" + tag);
      p.add_row(std::move(hi), blp::Relation::kLe, 0.0, "deg_hi_" + tag);
      // x_i <= z: redundant for 0/1 points, but it makes the relaxation far tighter.
      for (int i : inc) {
        p.add_row({{i, 1.0}, {z, -1.0}}, blp::Relation::kLe, 0.0,
                  "link_" + tag + "_" + std::to_string(i));
      }
    } else if (n_c <= 4) {
      p.add_row(std::move(deg), blp::Relation::kLe, 4.0 - n_c, "deg_cap_" + tag);
    } else {
      prob.warnings.push_back({v, n_c});
    }

    if (pairs[v].empty()) continue;
    std::vector<int> ys;
    for (const auto& [i, j] : pairs[v]) {
      const double cost = cfg.sharp_per_pair && pair_total > 0 ? cfg.lambda_m / pair_total : 0.0;
      const std::string yt = tag + "_" + std::to_string(i) + "_" + std::to_string(j);
      const int y = p.add_var(cost, "y" + yt);
      ys.push_back(y);
      prob.pair_vars.push_back({y, i, j, v});
      p.add_row({{y, 1.0}, {i, -1.0}, {j, -1.0}}, blp::Relation::kGe, -1.0, "and_" + yt);
      p.add_row({{y, 1.0}, {i, -1.0}}, blp::Relation::kLe, 0.0, "and_a_" + yt);
      p.add_row({{y, 1.0}, {j, -1.0}}, blp::Relation::kLe, 0.0, "and_b_" + yt);
    }
    int s = -1;
    if (!cfg.sharp_per_pair) {
      s = p.add_var(m > 0 ? cfg.lambda_m / m : 0.0, "s" + std::to_string(v));
      prob.sharp_var[v] = s;
      std::vector<blp::Term> any{{s, 1.0}};
      for (int y : ys) {
        p.add_row({{s, 1.0}, {y, -1.0}}, blp::Relation::kGe, 0.0, "or_" + tag + "_" + p.var_names[y]);
        any.push_back({y, -1.0});
      }
      p.add_row(std::move(any), blp::Relation::kLe, 0.0, "or_" + tag);
    }
    if (prob.degree_var[v] < 0) continue;
    // Where degree 1 is ruled out, a selected candidate either continues
    // straight through v or makes v sharp. Redundant for 0/1 points; without
    // it the pair products relax to zero at x = 1/2.
    for (int i : inc) {
      std::vector<blp::Term> turn{{i, 1.0}};
      for (int j : inc) {
        if (j != i && line_angle(a.candidates[i].seg.direction(), a.candidates[j].seg.direction()) <= tol) {
          turn.push_back({j, -1.0});
        }
      }
      if (s >= 0) {
        turn.push_back({s, -1.0});
      } else {
        for (std::size_t k = 0; k < pairs[v].size(); ++k) {
          if (pairs[v][k].first == i || pairs[v][k].second == i) turn.push_back({ys[k], -1.0});
        }
      }
      p.add_row(std::move(turn), blp::Relation::kLe, 0.0, "turn_" + tag + "_" + std::to_string(i));
    }
  }
  return prob;
}

Energies evaluate_energies(const SelectionProblem& prob, std::span<const std::uint8_t> sel) {
  const auto& a = prob.arrangement;
  const auto n = a.candidates.size();
  Energies e;
  if (prob.total_support > 0.0) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (sel[i]) f += fitting_score(a.candidates[i], prob.eps_f);
    }
    e.fitting = 1.0 - f / prob.total_support;
  }
  if (n > 0) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (sel[i]) c += 1.0 - covered_length(a.candidates[i], prob.eps_c) / a.candidates[i].seg.length();
    }
    e.coverage = c / static_cast<double>(n);
  }
  if (prob.complexity_norm > 0) {
    int sharp = 0;
    if (prob.cfg.sharp_per_pair) {
      const double tol = deg2rad(prob.cfg.collinear_tol_deg);
      for (const auto& v : a.vertices) {
        for (std::size_t x = 0; x < v.incident.size(); ++x) {
          for (std::size_t y = x + 1; y < v.incident.size(); ++y) {
            const int i = v.incident[x], j = v.incident[y];
            sharp += sel[i] && sel[j] &&
                     line_angle(a.candidates[i].seg.direction(), a.candidates[j].seg.direction()) > tol;
          }
        }
      }
    } else {
      for (std::size_t v = 0; v < a.vertices.size(); ++v) {
        sharp += is_sharp(a, static_cast<int>(v), sel, prob.cfg.collinear_tol_deg);
      }
    }
    e.complexity = static_cast<double>(sharp) / prob.complexity_norm;
  }
  return e;
}

std::vector<std::uint8_t> complete_assignment(const SelectionProblem& prob,
                                              std::span<const std::uint8_t> sel) {
  std::vector<std::uint8_t> full(prob.program.n, 0);
  std::copy(sel.begin(), sel.end(), full.begin());
  const auto& verts = prob.arrangement.vertices;
  for (std::size_t v = 0; v < verts.size(); ++v) {
    if (prob.degree_var[v] < 0) continue;
    for (int i : verts[v].incident) full[prob.degree_var[v]] |= sel[i];
  }
  for (const auto& pv : prob.pair_vars) {
    full[pv.y] = sel[pv.i] && sel[pv.j];
    if (prob.sharp_var[pv.vertex] >= 0) full[prob.sharp_var[pv.vertex]] |= full[pv.y];
  }
  return full;
}

double weighted_energy(const Energies& e, const FloorplanConfig& cfg) {
  return cfg.lambda_f * e.fitting + cfg.lambda_c * e.coverage + cfg.lambda_m * e.complexity;
}

std::vector<Segment2> FloorplanModel::wall_segments() const {
  std::vector<Segment2> out;
  for (const auto& w : walls) out.push_back({vertices[w[0]], vertices[w[1]]});
  return out;
}

namespace {

// Deletion filter: drop each row in turn and keep it dropped while the rest
// stays infeasible.
std::vector<std::string> irreducible_rows(const blp::BinaryProgram& p, double budget) {
  std::vector<int> keep(p.rows.size());
  std::iota(keep.begin(), keep.end(), 0);
  for (std::size_t k = 0; k < p.rows.size(); ++k) {
    std::vector<int> trial;
    for (int r : keep) {
      if (r != static_cast<int>(k)) trial.push_back(r);
    }
    blp::BinaryProgram q;
    q.n = p.n;
    q.objective.assign(p.n, 0.0);
    for (int r : trial) q.rows.push_back(p.rows[r]);
    if (blp::solve(q, budget).status == blp::Status::kInfeasible) keep = std::move(trial);
  }
  std::vector<std::string> names;
  for (int r : keep) names.push_back(p.rows[r].name.empty() ? "r" + std::to_string(r) : p.rows[r].name);
  return names;
}

}  // namespace

FloorplanModel assemble_and_solve(const SelectionProblem& prob) {
  const auto& a = prob.arrangement;
  const auto n = a.candidates.size();
  FloorplanModel model;
  blp::Solution sol;
  try {
    sol = blp::solve(prob.program, prob.cfg.time_budget_s);
  } catch (const blp::BudgetExceeded& e) {
    if (!e.has_incumbent) throw;
    sol = e.incumbent;
    model.optimal = false;
    model.gap = e.gap;
  }
  if (sol.status == blp::Status::kInfeasible) {
    std::vector<std::string> rows;
    if (static_cast<int>(n) <= prob.cfg.iis_max_candidates) {
      rows = irreducible_rows(prob.program, prob.cfg.time_budget_s);
    }
    throw Infeasible("wall selection problem is infeasible", std::move(rows));
  }
  model.nodes_explored = sol.nodes_explored;

  std::vector<std::uint8_t> sel(n, 0);
  for (std::size_t i = 0; i < n; ++i) sel[i] = sol.assignment[i];
  model.energies = evaluate_energies(prob, sel);
  model.objective = weighted_energy(model.energies, prob.cfg);

  std::vector<int> remap(a.vertices.size(), -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!sel[i]) continue;
    model.selected.push_back(static_cast<int>(i));
    for (int v : a.candidates[i].endpoints) remap[v] = 0;
  }
  for (std::size_t v = 0; v < remap.size(); ++v) {
    if (remap[v] < 0) continue;
    remap[v] = static_cast<int>(model.vertices.size());
    model.vertices.push_back(a.vertices[v].position);
  }
  for (int i : model.selected) {
    const auto& e = a.candidates[i].endpoints;
    model.walls.push_back({remap[e[0]], remap[e[1]]});
  }
  if (prob.cfg.use_trajectory) {
    // An opening is a crossed candidate bridging two selected walls.
    auto touches_wall = [&](int v) {
      const auto& inc = a.vertices[v].incident;
      return std::any_of(inc.begin(), inc.end(), [&](int i) { return sel[i] != 0; });
    };
    for (const auto& c : a.candidates) {
      if (c.crossed_by_trajectory && touches_wall(c.endpoints[0]) && touches_wall(c.endpoints[1])) {
        model.openings.push_back(c.seg);
      }
    }
  }
  return model;
}

std::vector<Polyline> trajectory_polylines(const std::vector<landmarks::TrajectoryPose>& poses) {
  std::vector<int> order;
  std::map<int, std::size_t> slot;
  std::vector<Polyline> key_lines, all_lines;
  for (const auto& p : poses) {
    auto [it, fresh] = slot.emplace(p.session, key_lines.size());
    if (fresh) {
      key_lines.emplace_back();
      all_lines.emplace_back();
    }
    const Point2 q(p.T_wc.translation.x(), p.T_wc.translation.y());
    all_lines[it->second].push_back(q);
    if (p.keyframe) key_lines[it->second].push_back(q);
  }
  for (std::size_t k = 0; k < key_lines.size(); ++k) {
    if (key_lines[k].size() < 2) key_lines[k] = all_lines[k];
  }
  return key_lines;
}

std::vector<WallSegment2D> wall_segments(const MapSnapshot& snap, const FloorplanConfig& cfg) {
  std::vector<WallSegment2D> segs;
  for (const auto& lm : select_wall_landmarks(snap, cfg.vertical_tol_deg)) {
    try {
      for (auto& piece : split_at_gaps(project_and_fit(lm, cfg), cfg.split_gap, cfg.min_extent)) {
        segs.push_back(std::move(piece));
      }
    } catch (const DegenerateExtent&) {
    }
  }
  return regularize(std::move(segs), cfg);
}

FloorplanModel reconstruct(const MapSnapshot& snap, const FloorplanConfig& cfg,
                           ReconstructionTimings* timings) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto segs = wall_segments(snap, cfg);
  const auto traj = trajectory_polylines(snap.trajectory);
  const auto prob = build_problem(build_arrangement(segs, traj, cfg), cfg);
  const double gen = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();
  FloorplanModel model = assemble_and_solve(prob);
  if (timings) {
    timings->generation_s = gen;
    timings->selection_s = seconds_since(t1);
    timings->candidates = prob.arrangement.candidates.size();
  }
  model.trajectory = traj;
  model.epoch = snap.epoch;
  std::size_t total = 0;
  for (const auto& s : segs) total += s.support2d.size();
  const std::size_t stride = std::max<std::size_t>(1, (total + 3999) / 4000);
  std::size_t k = 0;
  for (const auto& s : segs) {
    for (const auto& p : s.support2d) {
      if (k++ % stride == 0) model.support.push_back(p);
    }
  }
  return model;
}

namespace {

nlohmann::json point_json(const Point2& p) { return nlohmann::json::array({p.x(), p.y()}); }

Point2 point_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nlohmann::json floorplan_to_json(const FloorplanModel& m) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : m.vertices) j["vertices"].push_back(point_json(v));
  j["walls"] = m.walls;
  j["energies"] = {{"fitting", m.energies.fitting},
                   {"coverage", m.energies.coverage},
                   {"complexity", m.energies.complexity}};
  j["objective"] = m.objective;
  j["optimal"] = m.optimal;
  j["gap"] = std::isfinite(m.gap) ? nlohmann::json(m.gap) : nlohmann::json(nullptr);
  j["nodes_explored"] = m.nodes_explored;
  j["epoch"] = m.epoch;
  j["openings"] = nlohmann::json::array();
  for (const auto& s : m.openings) j["openings"].push_back({point_json(s.a), point_json(s.b)});
  j["trajectory"] = nlohmann::json::array();
  for (const auto& line : m.trajectory) {
    nlohmann::json l = nlohmann::json::array();
    for (const auto& p : line) l.push_back(point_json(p));
    j["trajectory"].push_back(std::move(l));
  }
  j["support"] = nlohmann::json::array();
  for (const auto& p : m.support) j["support"].push_back(point_json(p));
  return j;
}

FloorplanModel floorplan_from_json(const nlohmann::json& j) {
  FloorplanModel m;
  for (const auto& v : j.at("vertices")) m.vertices.push_back(point_from(v));
  for (const auto& w : j.at("walls")) {
    const int a = w.at(0).get<int>(), b = w.at(1).get<int>();
    const int nv = static_cast<int>(m.vertices.size());
    if (a < 0 || b < 0 || a >= nv || b >= nv) throw Error("floorplan wall references a missing vertex");
    m.walls.push_back({a, b});
  }
  const auto& e = j.at("energies");
  m.energies = {e.at("fitting").get<double>(), e.at("coverage").get<double>(),
                e.at("complexity").get<double>()};
  m.objective = j.at("objective").get<double>();
  m.optimal = j.value("optimal", true);
  m.gap = j.contains("gap") && !j["gap"].is_null() ? j["gap"].get<double>()
                                                   : std::numeric_limits<double>::infinity();
  m.nodes_explored = j.value("nodes_explored", 0L);
  m.epoch = j.value("epoch", std::uint64_t{0});
  if (j.contains("openings")) {
    for (const auto& s : j["openings"]) m.openings.push_back({point_from(s.at(0)), point_from(s.at(1))});
  }
  if (j.contains("trajectory")) {
    for (const auto& l : j["trajectory"]) {
      Polyline line;
      for (const auto& p : l) line.push_back(point_from(p));
      m.trajectory.push_back(std::move(line));
    }
  }
  if (j.contains("support")) {
    for (const auto& p : j["support"]) m.support.push_back(point_from(p));
  }
  return m;
}

std::string render_svg(const FloorplanModel& m) {
  Point2 lo = Point2::Constant(std::numeric_limits<double>::infinity());
  Point2 hi = -lo;
  auto grow = [&](const Point2& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (const auto& v : m.vertices) grow(v);
  for (const auto& l : m.trajectory)
    for (const auto& p : l) grow(p);
  for (const auto& p : m.support) grow(p);
  if (!std::isfinite(lo.x())) {
    lo.setZero();
    hi.setOnes();
  }
  const double pad = 0.5;
  lo.array() -= pad;
  hi.array() += pad;
  const double scale = 800.0 / std::max((hi - lo).maxCoeff(), 1e-6);
  const double w = (hi.x() - lo.x()) * scale;
  const double h = (hi.y() - lo.y()) * scale;
  char buf[256];
  auto px = [&](const Point2& p) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", (p.x() - lo.x()) * scale, (hi.y() - p.y()) * scale);
    return std::string(buf);
  };

  std::ostringstream os;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.2f %.2f\">\n",
                std::ceil(w), std::ceil(h), w, h);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g fill=\"#9a9a9a\">\n";
  for (const auto& p : m.support) {
    const auto xy = px(p);
    const auto comma = xy.find(',');
    os << "<circle cx=\"" << xy.substr(0, comma) << "\" cy=\"" << xy.substr(comma + 1)
       << "\" r=\"1\"/>\n";
  }
  os << "</g>\n";
  for (const auto& l : m.trajectory) {
    os << "<polyline fill=\"none\" stroke=\"#2f6fdf\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < l.size(); ++k) os << (k ? " " : "") << px(l[k]);
    os << "\"/>\n";
  }
  auto line = [&](const Segment2& s, const char* style) {
    const auto a = px(s.a), b = px(s.b);
    os << "<line x1=\"" << a.substr(0, a.find(',')) << "\" y1=\"" << a.substr(a.find(',') + 1)
       << "\" x2=\"" << b.substr(0, b.find(',')) << "\" y2=\"" << b.substr(b.find(',') + 1) << "\" "
       << style << "/>\n";
  };
  for (const auto& s : m.openings) line(s, "stroke=\"#d62728\" stroke-width=\"3\" stroke-dasharray=\"6 4\"");
  for (const auto& s : m.wall_segments()) line(s, "stroke=\"black\" stroke-width=\"4\" stroke-linecap=\"round\"");
  os << "</svg>\n";
  return os.str();
}

}  // namespace floorplan::opt
