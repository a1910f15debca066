#include "floorplan/stereo_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>

namespace floorplan::stereo {

using geometry::Point2;

NonPositiveDisparity::NonPositiveDisparity(double d)
    : Error("non-positive disparity: " + std::to_string(d)) {}

Point3 triangulate(double u, double v, double d, const CameraIntrinsics& K) {
  if (!(d > 0.0)) throw NonPositiveDisparity(d);
  const double z = K.fx * K.baseline / d;
  return {(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z};
}

std::array<double, 3> project(const Point3& p, const CameraIntrinsics& K) {
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy, K.fx * K.baseline / p.z()};
}

void triangulate_all(std::vector<SupportPoint>& points, const CameraIntrinsics& K) {
  for (auto& sp : points) sp.p3 = triangulate(sp.u, sp.v, sp.d, K);
}

double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
         clift * (adx * bdy - bdx * ady);
}

namespace {

constexpr int kGhost = -1;

// Incremental Bowyer-Watson over a triangulation closed by ghost triangles:
// every hull edge (a, b) carries a ghost triangle (b, a, ghost), which stands
// for the open half-plane beyond that edge.
class Delaunay {
 public:
  explicit Delaunay(const std::vector<Point2>& pts) : pts_(pts) {}

  void run(const std::vector<int>& order) {
    const int a = order[0];
    const int b = order[1];
    std::size_t k = 2;
    while (k < order.size() && orient2d(pts_[a], pts_[b], pts_[order[k]]) == 0.0) ++k;
    if (k == order.size()) throw DegenerateInput("all support points are collinear");
    int c = order[k];
    int bb = b;
    if (orient2d(pts_[a], pts_[bb], pts_[c]) < 0.0) std::swap(bb, c);
    seed(a, bb, c);
    for (std::size_t i = 2; i < order.size(); ++i) {
      if (i == k) continue;
      insert(order[i]);
    }
  }

  [[nodiscard]] std::vector<std::array<int, 3>> real_triangles() const {
    std::vector<std::array<int, 3>> out;
    for (const auto& t : tris_) {
      if (!t.alive || is_ghost(t)) continue;
      auto v = t.v;
      const auto lead = std::min_element(v.begin(), v.end()) - v.begin();
      std::rotate(v.begin(), v.begin() + lead, v.end());
      out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nbr{-1, -1, -1};
    bool alive = true;
  };

  static bool is_ghost(const Tri& t) { return t.v[2] == kGhost; }

  bool conflicts(const Tri& t, const Point2& p) const {
    if (!is_ghost(t)) return incircle(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]], p) > 0.0;
    const Point2& a = pts_[t.v[0]];
    const Point2& b = pts_[t.v[1]];
    const double o = orient2d(a, b, p);
    if (o > 0.0) return true;
    if (o < 0.0) return false;
    return (p - a).dot(b - a) > 0.0 && (p - b).dot(a - b) > 0.0;
  }

  // Rotates so that a ghost vertex, if any, sits last.
  static std::array<int, 3> canonical(std::array<int, 3> v) {
    if (v[0] == kGhost) return {v[1], v[2], v[0]};
    if (v[1] == kGhost) return {v[2], v[0], v[1]};
    return v;
  }

  static int edge_index(const Tri& t, int from, int to) {
    for (int i = 0; i < 3; ++i) {
      if (t.v[(i + 1) % 3] == from && t.v[(i + 2) % 3] == to) return i;
    }
    return -1;
  }

  void link_by_edges(const std::vector<int>& ids) {
    std::map<std::pair<int, int>, std::pair<int, int>> edges;
    for (int id : ids) {
      for (int i = 0; i < 3; ++i) {
        edges[{tris_[id].v[(i + 1) % 3], tris_[id].v[(i + 2) % 3]}] = {id, i};
      }
    }
    for (int id : ids) {
      for (int i = 0; i < 3; ++i) {
        const auto it = edges.find({tris_[id].v[(i + 2) % 3], tris_[id].v[(i + 1) % 3]});
        if (it != edges.end()) tris_[id].nbr[i] = it->second.first;
      }
    }
  }

  void seed(int a, int b, int c) {
    tris_.push_back({{a, b, c}});
    std::vector<int> ids{0};
    const std::array<int, 3> v{a, b, c};
    for (int i = 0; i < 3; ++i) {
      tris_.push_back({canonical({v[(i + 2) % 3], v[(i + 1) % 3], kGhost})});
      ids.push_back(static_cast<int>(tris_.size()) - 1);
    }
    link_by_edges(ids);
    last_ = 0;
  }

  int locate(const Point2& p) const {
    int t = last_;
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < limit; ++step) {
      const Tri& tri = tris_[t];
      int next = -1;
      for (int k = 0; k < 3; ++k) {
        const int i = static_cast<int>((k + step) % 3);
        if (orient2d(pts_[tri.v[(i + 1) % 3]], pts_[tri.v[(i + 2) % 3]], p) < 0.0) {
          next = tri.nbr[i];
          break;
        }
      }
      if (next < 0) return t;
      if (is_ghost(tris_[next])) return next;
      t = next;
    }
    for (std::size_t i = 0; i < tris_.size(); ++i) {
      if (tris_[i].alive && conflicts(tris_[i], p)) return static_cast<int>(i);
    }
    return -1;
  }

  void insert(int pid) {
    const Point2& p = pts_[pid];
    const int start = locate(p);
    if (start < 0 || !conflicts(tris_[start], p)) return;

    ++stamp_;
    mark_.resize(tris_.size(), 0);
    auto in_cavity = [&](int t) { return mark_[t] == stamp_; };
    std::vector<int> cavity{start};
    mark_[start] = stamp_;
    for (std::size_t head = 0; head < cavity.size(); ++head) {
      for (int n : tris_[cavity[head]].nbr) {
        if (n < 0 || in_cavity(n)) continue;
        if (conflicts(tris_[n], p)) {
          mark_[n] = stamp_;
          cavity.push_back(n);
        }
      }
    }

    struct Boundary {
      int from, to, outer;
    };
    std::vector<Boundary> boundary;
    for (int t : cavity) {
      for (int i = 0; i < 3; ++i) {
        const int n = tris_[t].nbr[i];
        if (n >= 0 && in_cavity(n)) continue;
        boundary.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], n});
      }
    }
    for (int t : cavity) tris_[t].alive = false;

    std::vector<int> created;
    created.reserve(boundary.size());
    for (const auto& e : boundary) {
      tris_.push_back({canonical({e.from, e.to, pid})});
      const int id = static_cast<int>(tris_.size()) - 1;
      created.push_back(id);
      if (e.outer >= 0) {
        const int j = edge_index(tris_[e.outer], e.to, e.from);
        tris_[e.outer].nbr[j] = id;
        tris_[id].nbr[edge_index(tris_[id], e.from, e.to)] = e.outer;
      }
    }
    // Edges through the new vertex pair up among the created triangles.
    std::map<std::pair<int, int>, int> spokes;
    for (int id : created) {
      for (int i = 0; i < 3; ++i) {
        const int from = tris_[id].v[(i + 1) % 3];
        const int to = tris_[id].v[(i + 2) % 3];
        if (from == pid || to == pid) spokes[{from, to}] = id;
      }
    }
    for (int id : created) {
      for (int i = 0; i < 3; ++i) {
        const int from = tris_[id].v[(i + 1) % 3];
        const int to = tris_[id].v[(i + 2) % 3];
        if (from != pid && to != pid) continue;
        const auto it = spokes.find({to, from});
        if (it != spokes.end()) tris_[id].nbr[i] = it->second;
      }
      if (!is_ghost(tris_[id])) last_ = id;
    }
  }

  const std::vector<Point2>& pts_;
  std::vector<Tri> tris_;
  std::vector<int> mark_;
  int stamp_ = 0;
  int last_ = 0;
};

double edge_angle(const Point3& at, const Point3& p, const Point3& q) {
  const Eigen::Vector3d e1 = p - at;
  const Eigen::Vector3d e2 = q - at;
  return std::atan2(e1.cross(e2).norm(), e1.dot(e2));
}

}  // namespace

TriMesh build_mesh(const std::vector<SupportPoint>& points) {
  std::vector<Point2> pts;
  pts.reserve(points.size());
  for (const auto& sp : points) pts.emplace_back(sp.u, sp.v);

  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pts[a].x() != pts[b].x()) return pts[a].x() < pts[b].x();
    if (pts[a].y() != pts[b].y()) return pts[a].y() < pts[b].y();
    return a < b;
  });
  order.erase(std::unique(order.begin(), order.end(),
                          [&](int a, int b) { return pts[a] == pts[b]; }),
              order.end());
  if (order.size() < 3) throw DegenerateInput("fewer than 3 distinct support points");

  Delaunay dt(pts);
  dt.run(order);

  TriMesh mesh;
  mesh.triangles = dt.real_triangles();
  for (const auto& t : mesh.triangles) mesh.vertices.insert(mesh.vertices.end(), t.begin(), t.end());
  std::sort(mesh.vertices.begin(), mesh.vertices.end());
  mesh.vertices.erase(std::unique(mesh.vertices.begin(), mesh.vertices.end()), mesh.vertices.end());
  return mesh;
}

TriangleShape triangle_shape(const Point3& a, const Point3& b, const Point3& c) {
  const double ab = (b - a).norm();
  const double bc = (c - b).norm();
  const double ca = (a - c).norm();
  TriangleShape s{};
  s.longest_edge = std::max({ab, bc, ca});
  s.shortest_edge = std::min({ab, bc, ca});
  if (s.shortest_edge <= 0.0) {
    s.min_angle_deg = 0.0;
    return s;
  }
  const double min_angle =
      std::min({edge_angle(a, b, c), edge_angle(b, c, a), edge_angle(c, a, b)});
  s.min_angle_deg = geometry::rad2deg(min_angle);
  return s;
}

TriMesh prune_mesh(const TriMesh& mesh, const std::vector<SupportPoint>& points,
                   const PruneGates& gates) {
  TriMesh out;
  for (const auto& t : mesh.triangles) {
    const auto s = triangle_shape(points[t[0]].p3, points[t[1]].p3, points[t[2]].p3);
    if (s.shortest_edge <= 0.0) continue;
    if (s.longest_edge > gates.max_edge) continue;
    if (s.longest_edge / s.shortest_edge > gates.max_aspect) continue;
    if (s.min_angle_deg < gates.min_angle_deg) continue;
    out.triangles.push_back(t);
  }
  for (const auto& t : out.triangles) out.vertices.insert(out.vertices.end(), t.begin(), t.end());
  std::sort(out.vertices.begin(), out.vertices.end());
  out.vertices.erase(std::unique(out.vertices.begin(), out.vertices.end()), out.vertices.end());
  return out;
}

}  // namespace floorplan::stereo
