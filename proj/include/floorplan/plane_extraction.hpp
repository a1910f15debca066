#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "floorplan/geometry.hpp"
#include "floorplan/stereo_mesh.hpp"

namespace floorplan::extraction {

using geometry::PlaneCartesian;
using geometry::Point3;

/// A plane as a point of the parameter space: azimuth, elevation and offset.
struct PPSPoint {
  double phi{0.0};  ///< (-pi, pi]
  double psi{0.0};  ///< [0, pi]
  double d{0.0};
  int src_triangle{-1};
};

struct PpsWeights {
  double w_phi = 1.0;
  double w_psi = 1.0;
  double w_d = 2.0;  ///< per meter
};

struct Clustering {
  std::vector<std::vector<int>> clusters;  ///< member indices, ascending
  std::vector<int> noise;                  ///< ascending
};

struct PlaneFit {
  PlaneCartesian plane;
  std::vector<int> inliers;  ///< indices into the fitted point list
  double inlier_ratio{0.0};
};

struct PlaneFeature {
  PlaneCartesian plane;
  std::vector<int> support;  ///< support-point indices (union of cluster vertices)
  double inlier_ratio{0.0};
};

struct ExtractionConfig {
  double eps = 0.08;
  int min_pts = 5;
  PpsWeights weights;
  int ransac_iterations = 200;
  double dist_gate = 0.02;  ///< meters
  double theta_i = 0.75;
  std::uint64_t seed = 0;
  bool merge_coplanar = true;  ///< fold clusters lying on an already found plane into it
};

class InsufficientPoints : public Error {
 public:
  explicit InsufficientPoints(std::size_t n);
};

class RejectedLowInlierRatio : public Error {
 public:
  explicit RejectedLowInlierRatio(double ratio);
  double ratio;
};

[[nodiscard]] PPSPoint to_pps(const PlaneCartesian& pl);

/// Unit normal of a parameter-space point.
[[nodiscard]] geometry::Vec3 pps_normal(const PPSPoint& p);

/// Weighted metric: wrapped azimuth gap scaled by sin of the mean elevation,
/// elevation gap and offset gap, combined in quadrature.
[[nodiscard]] double pps_distance(const PPSPoint& a, const PPSPoint& b, const PpsWeights& w);

/// DBSCAN under pps_distance. min_pts counts the query point itself. Points are
/// visited in index order, so a border point reachable from two clusters joins
/// the first one discovered.
[[nodiscard]] Clustering cluster_pps(std::span<const PPSPoint> points, double eps, int min_pts,
                                     const PpsWeights& w = {});

/// Total least-squares plane through the points (centroid + smallest principal axis).
[[nodiscard]] PlaneCartesian fit_plane_least_squares(std::span<const Point3> points);

/// Best-consensus plane over sampled 3-point hypotheses, refit on its inliers.
/// Does not apply the inlier-ratio gate. Throws InsufficientPoints for n < 3.
[[nodiscard]] PlaneFit ransac_plane(std::span<const Point3> points, double dist_gate, int iterations,
                                    std::uint64_t seed);

/// ransac_plane followed by the theta_i acceptance gate.
/// Throws InsufficientPoints or RejectedLowInlierRatio.
[[nodiscard]] PlaneFit fit_plane_ransac(std::span<const Point3> points, double dist_gate,
                                        int iterations, std::uint64_t seed, double theta_i = 0.75);

/// Plane of a triangle, oriented towards the camera origin (d >= 0).
[[nodiscard]] PlaneCartesian triangle_plane(const Point3& a, const Point3& b, const Point3& c);

/// Per-frame plane features from a pruned camera-frame mesh. Feature planes
/// face the camera (d >= 0).
[[nodiscard]] std::vector<PlaneFeature> extract_planes(const stereo::TriMesh& mesh,
                                                       const std::vector<stereo::SupportPoint>& points,
                                                       const ExtractionConfig& cfg);

}  // namespace floorplan::extraction
