#include "floorplan/plane_extraction.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace floorplan::extraction {

using geometry::kPi;
using geometry::Vec3;

InsufficientPoints::InsufficientPoints(std::size_t n)
    : Error("plane fit needs at least 3 points, got " + std::to_string(n)) {}

RejectedLowInlierRatio::RejectedLowInlierRatio(double r)
    : Error("plane rejected, inlier ratio " + std::to_string(r)), ratio(r) {}

PPSPoint to_pps(const PlaneCartesian& pl) {
  PPSPoint p;
  // atan2(0, 0) is 0 by definition here; it only occurs at the elevation poles.
  p.phi = (pl.n.x() == 0.0 && pl.n.y() == 0.0) ? 0.0 : std::atan2(pl.n.y(), pl.n.x());
  if (p.phi == -kPi) p.phi = kPi;
  p.psi = std::acos(std::clamp(pl.n.z(), -1.0, 1.0));
  p.d = pl.d;
  return p;
}

Vec3 pps_normal(const PPSPoint& p) {
  return {std::cos(p.phi) * std::sin(p.psi), std::sin(p.phi) * std::sin(p.psi), std::cos(p.psi)};
}

double pps_distance(const PPSPoint& a, const PPSPoint& b, const PpsWeights& w) {
  double dphi = std::abs(a.phi - b.phi);
  if (dphi > kPi) dphi = 2.0 * kPi - dphi;
  const double s = std::sin(0.5 * (a.psi + b.psi));
  const double e_phi = w.w_phi * s * dphi;
  const double e_psi = w.w_psi * (a.psi - b.psi);
  const double e_d = w.w_d * (a.d - b.d);
  return std::sqrt(e_phi * e_phi + e_psi * e_psi + e_d * e_d);
}

Clustering cluster_pps(std::span<const PPSPoint> points, double eps, int min_pts,
                       const PpsWeights& w) {
  const int n = static_cast<int>(points.size());
  // Offset gaps alone bound the metric from below, so neighbours of a point lie
  // in a window of the offset-sorted order.
  std::vector<int> by_d(n);
  std::iota(by_d.begin(), by_d.end(), 0);
  std::sort(by_d.begin(), by_d.end(), [&](int a, int b) {
    return points[a].d != points[b].d ? points[a].d < points[b].d : a < b;
  });
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[by_d[i]] = i;
  const double d_window = w.w_d > 0.0 ? eps / w.w_d : std::numeric_limits<double>::infinity();

  auto region = [&](int i, std::vector<int>& out) {
    out.clear();
    const double d0 = points[i].d;
    for (int r = rank[i]; r >= 0 && d0 - points[by_d[r]].d <= d_window; --r) {
      if (pps_distance(points[i], points[by_d[r]], w) <= eps) out.push_back(by_d[r]);
    }
    for (int r = rank[i] + 1; r < n && points[by_d[r]].d - d0 <= d_window; ++r) {
      if (pps_distance(points[i], points[by_d[r]], w) <= eps) out.push_back(by_d[r]);
    }
    std::sort(out.begin(), out.end());
  };

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  std::vector<int> nbrs;
  std::vector<int> inner;
  Clustering result;
  for (int i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    region(i, nbrs);
    if (static_cast<int>(nbrs.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int cid = static_cast<int>(result.clusters.size());
    result.clusters.emplace_back();
    label[i] = cid;
    std::vector<int> queue;
    for (int j : nbrs) {
      if (label[j] == kNoise) label[j] = cid;
      if (label[j] == kUnvisited) {
        label[j] = cid;
        queue.push_back(j);
      }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int q = queue[head];
      region(q, inner);
      if (static_cast<int>(inner.size()) < min_pts) continue;
      for (int j : inner) {
        if (label[j] == kNoise) label[j] = cid;
        if (label[j] == kUnvisited) {
          label[j] = cid;
          queue.push_back(j);
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (label[i] >= 0) {
      result.clusters[label[i]].push_back(i);
    } else {
      result.noise.push_back(i);
    }
  }
  return result;
}

PlaneCartesian fit_plane_least_squares(std::span<const Point3> points) {
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Vec3 q = p - centroid;
    cov += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  return PlaneCartesian::from_point_normal(centroid, es.eigenvectors().col(0));
}

namespace {

std::vector<int> inliers_of(std::span<const Point3> points, const PlaneCartesian& pl, double gate) {
  std::vector<int> in;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::abs(pl.signed_distance(points[i])) <= gate) in.push_back(static_cast<int>(i));
  }
  return in;
}

}  // namespace

PlaneFit ransac_plane(std::span<const Point3> points, double dist_gate, int iterations,
                      std::uint64_t seed) {
  const std::size_t n = points.size();
  if (n < 3) throw InsufficientPoints(n);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  PlaneFit best;
  std::size_t best_count = 0;
  bool have = false;
  const int rounds = n == 3 ? 1 : std::max(iterations, 1);
  for (int it = 0; it < rounds; ++it) {
    std::size_t i0 = 0, i1 = 1, i2 = 2;
    if (n > 3) {
      i0 = pick(rng);
      do i1 = pick(rng); while (i1 == i0);
      do i2 = pick(rng); while (i2 == i0 || i2 == i1);
    }
    const Vec3 normal = (points[i1] - points[i0]).cross(points[i2] - points[i0]);
    if (normal.norm() < 1e-12) continue;
    const auto pl = PlaneCartesian::from_point_normal(points[i0], normal);
    std::size_t count = 0;
    for (const auto& p : points) count += std::abs(pl.signed_distance(p)) <= dist_gate;
    if (!have || count > best_count) {
      best_count = count;
      best.plane = pl;
      have = true;
    }
  }
  if (!have) return best;  // every sample was degenerate; inlier_ratio stays 0

  // Least-squares refinement over the consensus set, repeated until the
  // inlier set settles.
  auto in_set = inliers_of(points, best.plane, dist_gate);
  std::vector<Point3> in;
  for (int round = 0; round < 5 && in_set.size() >= 3; ++round) {
    in.clear();
    for (int i : in_set) in.push_back(points[i]);
    best.plane = fit_plane_least_squares(in);
    auto next = inliers_of(points, best.plane, dist_gate);
    const bool same = next == in_set;
    in_set = std::move(next);
    if (same) break;
  }
  best.inliers = std::move(in_set);
  best.inlier_ratio = static_cast<double>(best.inliers.size()) / static_cast<double>(n);
  return best;
}

PlaneFit fit_plane_ransac(std::span<const Point3> points, double dist_gate, int iterations,
                          std::uint64_t seed, double theta_i) {
  auto fit = ransac_plane(points, dist_gate, iterations, seed);
  if (fit.inlier_ratio < theta_i) throw RejectedLowInlierRatio(fit.inlier_ratio);
  return fit;
}

PlaneCartesian triangle_plane(const Point3& a, const Point3& b, const Point3& c) {
  auto pl = PlaneCartesian::from_point_normal(a, (b - a).cross(c - a));
  if (pl.d < 0.0) pl = {-pl.n, -pl.d};
  return pl;
}

namespace {

// Folds a feature into a larger one when most of its support lies on the
// larger plane. Noisy triangle normals can split one surface into several
// clusters; this puts the pieces back together.
std::vector<PlaneFeature> merge_coplanar(std::vector<PlaneFeature> features,
                                         const std::vector<stereo::SupportPoint>& points,
                                         const ExtractionConfig& cfg) {
  if (features.size() < 2) return features;
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return features[a].support.size() > features[b].support.size();
  });

  std::vector<std::size_t> kept;  // indices into features, each a group head
  std::vector<Point3> pts;
  for (std::size_t idx : order) {
    auto& f = features[idx];
    bool merged = false;
    for (std::size_t head : kept) {
      auto& g = features[head];
      std::size_t on = 0;
      for (int i : f.support) on += geometry::point_to_plane_distance(points[i].p3, g.plane) <= cfg.dist_gate;
      if (static_cast<double>(on) < cfg.theta_i * static_cast<double>(f.support.size())) continue;

      std::vector<int> support;
      std::set_union(g.support.begin(), g.support.end(), f.support.begin(), f.support.end(),
                     std::back_inserter(support));
      pts.clear();
      for (int i : support) pts.push_back(points[i].p3);
      const auto fit = ransac_plane(pts, cfg.dist_gate, cfg.ransac_iterations, cfg.seed + head);
      if (fit.inlier_ratio < cfg.theta_i) continue;
      g.plane = fit.plane.d < 0.0 ? PlaneCartesian{-fit.plane.n, -fit.plane.d} : fit.plane;
      g.support = std::move(support);
      g.inlier_ratio = fit.inlier_ratio;
      merged = true;
      break;
    }
    if (!merged) kept.push_back(idx);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<PlaneFeature> out;
  out.reserve(kept.size());
  for (std::size_t k : kept) out.push_back(std::move(features[k]));
  return out;
}

}  // namespace

std::vector<PlaneFeature> extract_planes(const stereo::TriMesh& mesh,
                                         const std::vector<stereo::SupportPoint>& points,
                                         const ExtractionConfig& cfg) {
  std::vector<PPSPoint> pps;
  pps.reserve(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    auto p = to_pps(triangle_plane(points[tri[0]].p3, points[tri[1]].p3, points[tri[2]].p3));
    p.src_triangle = static_cast<int>(t);
    pps.push_back(p);
  }
  const auto clustering = cluster_pps(pps, cfg.eps, cfg.min_pts, cfg.weights);

  std::vector<PlaneFeature> features;
  std::vector<Point3> pts;
  for (std::size_t c = 0; c < clustering.clusters.size(); ++c) {
    std::vector<int> support;
    for (int member : clustering.clusters[c]) {
      const auto& tri = mesh.triangles[pps[member].src_triangle];
      support.insert(support.end(), tri.begin(), tri.end());
    }
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    if (support.size() < 3) continue;

    pts.clear();
    for (int i : support) pts.push_back(points[i].p3);
    const auto fit = ransac_plane(pts, cfg.dist_gate, cfg.ransac_iterations, cfg.seed + c);
    if (fit.inlier_ratio < cfg.theta_i) continue;

    PlaneFeature f;
    f.plane = fit.plane.d < 0.0 ? PlaneCartesian{-fit.plane.n, -fit.plane.d} : fit.plane;
    f.support = std::move(support);
    f.inlier_ratio = fit.inlier_ratio;
    features.push_back(std::move(f));
  }
  return cfg.merge_coplanar ? merge_coplanar(std::move(features), points, cfg) : features;
}

}  // namespace floorplan::extraction
