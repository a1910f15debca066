#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "floorplan/geometry.hpp"

namespace floorplan::stereo {

using geometry::Point3;

struct CameraIntrinsics {
  double fx{0.0};
  double fy{0.0};
  double cx{0.0};
  double cy{0.0};
  double baseline{0.0};  ///< meters

  [[nodiscard]] bool valid() const { return fx > 0.0 && fy > 0.0 && baseline > 0.0; }
};

/// Which detector produced the correspondence. Carried for diagnostics only.
enum class FeatureKind : std::uint8_t { kCorner, kEdge };

struct SupportPoint {
  double u{0.0};
  double v{0.0};
  double d{0.0};  ///< disparity, pixels
  Point3 p3 = Point3::Zero();
  FeatureKind kind = FeatureKind::kCorner;
};

/// Triangles index into the support-point list the mesh was built from.
struct TriMesh {
  std::vector<int> vertices;
  std::vector<std::array<int, 3>> triangles;
};

struct PruneGates {
  double max_edge = 0.5;       ///< meters, longest 3D edge
  double max_aspect = 10.0;    ///< longest / shortest edge
  double min_angle_deg = 5.0;  ///< smallest interior angle
};

class NonPositiveDisparity : public Error {
 public:
  explicit NonPositiveDisparity(double d);
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Stereo back-projection of one pixel with disparity d.
[[nodiscard]] Point3 triangulate(double u, double v, double d, const CameraIntrinsics& K);

/// Inverse of triangulate: (u, v, d) of a camera-frame point with z > 0.
[[nodiscard]] std::array<double, 3> project(const Point3& p, const CameraIntrinsics& K);

/// Fills p3 of every support point. Throws NonPositiveDisparity.
void triangulate_all(std::vector<SupportPoint>& points, const CameraIntrinsics& K);

/// Delaunay triangulation of the (u, v) positions, lifted to 3D through p3.
/// Duplicate pixel positions keep the lowest index. Triangles come out CCW in
/// image coordinates, rotated so the smallest index leads, and sorted.
/// Throws DegenerateInput for fewer than 3 distinct or all-collinear points.
[[nodiscard]] TriMesh build_mesh(const std::vector<SupportPoint>& points);

/// Keeps triangles whose 3D shape passes all three gates.
[[nodiscard]] TriMesh prune_mesh(const TriMesh& mesh, const std::vector<SupportPoint>& points,
                                 const PruneGates& gates);

struct TriangleShape {
  double longest_edge;
  double shortest_edge;
  double min_angle_deg;
};

[[nodiscard]] TriangleShape triangle_shape(const Point3& a, const Point3& b, const Point3& c);

/// Strictly positive when d lies inside the circumcircle of the CCW triangle abc.
[[nodiscard]] double incircle(const geometry::Point2& a, const geometry::Point2& b,
                              const geometry::Point2& c, const geometry::Point2& d);
[[nodiscard]] double orient2d(const geometry::Point2& a, const geometry::Point2& b,
                              const geometry::Point2& c);

}  // namespace floorplan::stereo
